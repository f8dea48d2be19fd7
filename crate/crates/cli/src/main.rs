//! Command-line front end: config parsing, experiment dispatch, parallel
//! replica execution, CSV and metadata sinks.

mod config;

use brint::bcap::{self, EsParams, Region};
use brint::decompose::{decompose, DecomposeParams};
use brint::dist::{JumpDist, OffspringDist};
use brint::exact::Exact;
use brint::report::{fmt_f64, Table};
use brint::rng::Rng;
use brint::torus::{self, TorusConfig};
use brint::{Error, Result};
use config::{Config, Vars};

const USAGE: &str = "usage: brint <subcommand> [--flag value ...]

subcommands:
  exact        dump an exact table or marginal as CSV (index, value)
  bcap         escape probabilities and branching capacity of a set
  decompose    tree decomposition replicas with per-condition diagnostics
  visit-prob   scaled visiting probability of a set in the torus
  avoid-prob   avoidance probability at level u in the torus
  local-config exact-configuration probability in the torus
  cover        cover-probability curve over a size grid
  pair-visit   pair visiting probability in the torus
  mixing       exact total-variation mixing curve of the torus walk

common flags: --config FILE --out FILE --seed U64 --workers W
              --mu geo|tri|p0,p1,... --theta lazy --d D --N SIDE
exit codes: 0 ok, 1 config, 2 precondition, 3 truncation budget, 4 io";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    let Some(sub) = args.first() else {
        eprintln!("{USAGE}");
        return Err(Error::config("missing subcommand"));
    };
    if sub == "--help" || sub == "help" {
        println!("{USAGE}");
        return Ok(());
    }
    let cfg = Config::from_args(&args[1..])?;
    let started = std::time::Instant::now();
    let out_path = cfg.str_opt("out");
    let seed = cfg.u64_or("seed", 0)?;
    let workers = cfg.u64_or("workers", brint::parallel::default_workers() as u64)? as usize;

    let table = match sub.as_str() {
        "exact" => cmd_exact(&cfg)?,
        "bcap" => cmd_bcap(&cfg, seed, workers)?,
        "decompose" => cmd_decompose(&cfg, seed)?,
        "visit-prob" => cmd_visit(&cfg, seed, workers)?,
        "avoid-prob" => cmd_avoid(&cfg, seed, workers)?,
        "local-config" => cmd_local(&cfg, seed, workers)?,
        "cover" => cmd_cover(&cfg, seed, workers)?,
        "pair-visit" => cmd_pair(&cfg, seed, workers)?,
        "mixing" => cmd_mixing(&cfg)?,
        other => {
            eprintln!("{USAGE}");
            return Err(Error::config(format!("unknown subcommand '{other}'")));
        }
    };
    cfg.reject_unknown()?;

    let csv = table.to_csv();
    match &out_path {
        None => print!("{csv}"),
        Some(path) => {
            std::fs::write(path, &csv)?;
            // JSON-lines metadata record, enough to re-run exactly
            let meta = serde_json::json!({
                "subcommand": sub,
                "config": serde_json::from_str::<serde_json::Value>(&cfg.echo()).unwrap(),
                "seed": seed,
                "workers": workers,
                "wall_time_s": started.elapsed().as_secs_f64(),
                "version": env!("CARGO_PKG_VERSION"),
                "rows": table.rows.len(),
                "output": path,
            });
            use std::io::Write;
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(format!("{path}.meta.jsonl"))?;
            writeln!(f, "{meta}")?;
        }
    }
    Ok(())
}

fn parse_mu(cfg: &Config) -> Result<OffspringDist> {
    let spec = cfg.str_or("mu", "geo");
    if spec.contains(',') {
        let pmf: Vec<f64> = spec
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::config(format!("--mu: bad probability '{p}'")))
            })
            .collect::<Result<_>>()?;
        OffspringDist::new(pmf, "custom")
    } else {
        OffspringDist::preset(&spec)
    }
}

fn parse_theta(cfg: &Config, d: usize) -> Result<JumpDist> {
    JumpDist::preset(&cfg.str_or("theta", "lazy"), d)
}

fn es_params(cfg: &Config, workers: usize) -> Result<EsParams> {
    let mut p = EsParams {
        workers,
        ..Default::default()
    };
    p.r_stop = cfg.u64_or("r-stop", p.r_stop as u64)? as i32;
    p.samples = cfg.u64_or("samples", 20_000)?;
    Ok(p)
}

fn cmd_exact(cfg: &Config) -> Result<Table> {
    let mu = parse_mu(cfg)?;
    let exact = Exact::new(mu);
    let which = cfg.str_or("table", "tree-size");
    let mut t = Table::new(cfg.echo(), &["index", "value"]);
    match which.as_str() {
        "tree-size" => {
            let nmax = cfg.usize_req("nmax")?;
            if nmax > brint::exact::DEFAULT_NMAX * 10 {
                return Err(Error::precondition("nmax too large"));
            }
            for n in 1..=nmax {
                t.push_row(vec![n.to_string(), fmt_f64(exact.tree_size_pmf(n)?)]);
            }
        }
        "step" => {
            let n = cfg.usize_req("n")?;
            for x in -(n as i64)..=(n as i64 * exact.mu().kmax() as i64) {
                let p = exact.step_prob(n, x);
                if p > 0.0 {
                    t.push_row(vec![x.to_string(), fmt_f64(p)]);
                }
            }
        }
        "bridge" => {
            let m = cfg.usize_req("m")?;
            let (lo, hi) = exact.bridge_window(m);
            for h in lo..=hi {
                t.push_row(vec![h.to_string(), fmt_f64(exact.bridge_prob(m, h))]);
            }
        }
        "cond-marginal" => {
            let n = cfg.usize_req("n")?;
            let m = cfg.usize_req("m")?;
            let (lo, hi) = exact.bridge_window(m);
            for h in lo.max(0)..=hi {
                t.push_row(vec![
                    h.to_string(),
                    fmt_f64(exact.conditioned_marginal(n, m, h)?),
                ]);
            }
        }
        "leaf" => {
            let n = cfg.usize_req("n")?;
            for k in 1..n {
                t.push_row(vec![k.to_string(), fmt_f64(exact.leaf_probability(n, k)?)]);
            }
        }
        other => return Err(Error::config(format!("unknown table '{other}'"))),
    }
    Ok(t)
}

fn cmd_bcap(cfg: &Config, seed: u64, workers: usize) -> Result<Table> {
    let d = cfg.usize_req("d")?;
    let mu = parse_mu(cfg)?;
    let theta = parse_theta(cfg, d)?;
    let params = es_params(cfg, workers)?;
    let region = match cfg.str_opt("box-radius") {
        Some(r) => Region::Box {
            d,
            radius: r
                .parse()
                .map_err(|_| Error::config("--box-radius must be an integer"))?,
        },
        None => Region::Points(cfg.sites_req("K", d)?),
    };
    let cap = bcap::estimate_bcap(&region, &mu, &theta, &params, seed)?;
    let mut t = Table::new(cfg.echo(), &["x", "es", "stderr", "residual"]);
    if let Some(points) = &cap.points {
        for (site, est) in points {
            let coords = (0..d)
                .map(|i| site[i].to_string())
                .collect::<Vec<_>>()
                .join(" ");
            t.push_row(vec![
                coords,
                fmt_f64(est.value),
                fmt_f64(est.stderr),
                fmt_f64(est.residual),
            ]);
        }
    }
    t.push_row(vec![
        format!("bcap r_stop={} samples={}", cap.r_stop, cap.samples),
        fmt_f64(cap.bcap),
        fmt_f64(cap.stderr),
        fmt_f64(cap.residual),
    ]);
    Ok(t)
}

fn cmd_decompose(cfg: &Config, seed: u64) -> Result<Table> {
    let mu = parse_mu(cfg)?;
    let n_side = cfg.f64_req("N")?;
    let params = DecomposeParams {
        n_base: n_side,
        alpha: cfg.f64_req("alpha")?,
        beta: cfg.f64_req("beta")?,
        delta: cfg.f64_req("delta")?,
    };
    let vars = Vars {
        n_side,
        d: cfg.f64_or("d", 5.0)?,
        ..Default::default()
    };
    let n = cfg.formula_req("n", &vars)?.round() as usize;
    let replicas = cfg.u64_or("replicas", 200)?;
    let mut t = Table::new(
        cfg.echo(),
        &["replica", "m", "hat", "min_size", "max_size", "success", "failed"],
    );
    for r in 0..replicas {
        let mut rng = Rng::for_replica(seed, r);
        let host = brint::tree::sample_gw_conditioned(&mu, n, &mut rng);
        let d = decompose(&host, &params)?;
        let sizes: Vec<usize> = d.subtrees.iter().map(|s| s.len()).collect();
        t.push_row(vec![
            r.to_string(),
            d.roots.len().to_string(),
            d.hat_size.to_string(),
            sizes.iter().min().copied().unwrap_or(0).to_string(),
            sizes.iter().max().copied().unwrap_or(0).to_string(),
            (d.success as u8).to_string(),
            d.failed_conditions
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("+"),
        ]);
    }
    Ok(t)
}

fn torus_args(cfg: &Config) -> Result<(TorusConfig, OffspringDist, JumpDist)> {
    let d = cfg.usize_req("d")?;
    let n_side = cfg.usize_req("N")?;
    let torus = TorusConfig::new(n_side, d)?;
    if !torus.limit_regime() {
        eprintln!("warning: d = {d} < 5 is outside the limit-theorem regime");
    }
    Ok((torus, parse_mu(cfg)?, parse_theta(cfg, d)?))
}

fn result_table(cfg: &Config, r: &torus::ExperimentResult) -> Table {
    let mut t = Table::new(cfg.echo(), &["estimate", "stderr", "samples"]);
    t.push_row(vec![
        fmt_f64(r.estimate),
        fmt_f64(r.stderr),
        r.samples.to_string(),
    ]);
    t
}

fn cmd_visit(cfg: &Config, seed: u64, workers: usize) -> Result<Table> {
    let (torus, mu, theta) = torus_args(cfg)?;
    let vars = Vars {
        n_side: torus.n_side as f64,
        d: torus.d as f64,
        u: cfg.f64_or("u", 0.0)?,
        bcap0: cfg.f64_or("bcap0", 0.0)?,
    };
    let n = cfg.formula_req("n", &vars)?.round() as u64;
    let k = cfg.sites_req("K", torus.d)?;
    let samples = cfg.u64_or("samples", 100_000)?;
    let r = torus::visit_probability(&mu, &theta, &torus, n, &k, samples, seed, workers)?;
    Ok(result_table(cfg, &r))
}

fn cmd_avoid(cfg: &Config, seed: u64, workers: usize) -> Result<Table> {
    let (torus, mu, theta) = torus_args(cfg)?;
    let u = cfg.f64_req("u")?;
    let k = cfg.sites_req("K", torus.d)?;
    let samples = cfg.u64_or("samples", 20_000)?;
    let r = torus::avoidance_probability(&mu, &theta, &torus, u, &k, samples, seed, workers)?;
    Ok(result_table(cfg, &r))
}

fn cmd_local(cfg: &Config, seed: u64, workers: usize) -> Result<Table> {
    let (torus, mu, theta) = torus_args(cfg)?;
    let u = cfg.f64_req("u")?;
    let k = cfg.sites_req("K", torus.d)?;
    // A given as a site list (subset of K) or empty for the empty set
    let a_mask = match cfg.str_opt("A") {
        None => 0u32,
        Some(s) if s.is_empty() || s == "empty" => 0u32,
        Some(_) => {
            let a = cfg.sites_req("A", torus.d)?;
            let mut mask = 0u32;
            for site in &a {
                match k.iter().position(|ks| ks == site) {
                    Some(i) => mask |= 1 << i,
                    None => return Err(Error::precondition("A must be a subset of K")),
                }
            }
            mask
        }
    };
    let samples = cfg.u64_or("samples", 20_000)?;
    let r = torus::local_configuration(
        &mu, &theta, &torus, u, &k, a_mask, samples, seed, workers,
    )?;
    Ok(result_table(cfg, &r))
}

fn cmd_cover(cfg: &Config, seed: u64, workers: usize) -> Result<Table> {
    let (torus, mu, theta) = torus_args(cfg)?;
    let vars = Vars {
        n_side: torus.n_side as f64,
        d: torus.d as f64,
        u: cfg.f64_or("u", 0.0)?,
        bcap0: cfg.f64_or("bcap0", 0.0)?,
    };
    let grid_spec = cfg.str_or("grid", "Nd*logNd");
    let mut grid = Vec::new();
    for part in grid_spec.split(';') {
        grid.push(
            config::eval_formula(part, &vars)
                .map_err(|e| Error::config(format!("--grid: {e}")))?
                .round() as u64,
        );
    }
    let samples = cfg.u64_or("samples", 500)?;
    let points = torus::cover_experiment(&mu, &theta, &torus, &grid, samples, seed, workers)?;
    let mut t = Table::new(
        cfg.echo(),
        &["n", "p_cover", "stderr", "mean_covered_fraction", "samples"],
    );
    for p in points {
        t.push_row(vec![
            p.n.to_string(),
            fmt_f64(p.p_cover),
            fmt_f64(p.stderr),
            fmt_f64(p.mean_covered_fraction),
            p.samples.to_string(),
        ]);
    }
    Ok(t)
}

fn cmd_pair(cfg: &Config, seed: u64, workers: usize) -> Result<Table> {
    let (torus, mu, theta) = torus_args(cfg)?;
    let vars = Vars {
        n_side: torus.n_side as f64,
        d: torus.d as f64,
        ..Default::default()
    };
    let n = cfg.formula_req("n", &vars)?.round() as u64;
    let x = cfg.sites_req("x", torus.d)?[0];
    let y = cfg.sites_req("y", torus.d)?[0];
    let samples = cfg.u64_or("samples", 100_000)?;
    let r = torus::pair_visit_probability(&mu, &theta, &torus, n, x, y, samples, seed, workers)?;
    Ok(result_table(cfg, &r))
}

fn cmd_mixing(cfg: &Config) -> Result<Table> {
    let d = cfg.usize_req("d")?;
    let n_side = cfg.usize_req("N")?;
    let torus = TorusConfig::new(n_side, d)?;
    let theta = parse_theta(cfg, d)?;
    let t_max = cfg.usize_req("t")?;
    let tvs = torus::mixing_check(&theta, &torus, t_max)?;
    let mut t = Table::new(cfg.echo(), &["t", "tv"]);
    for (i, tv) in tvs.iter().enumerate() {
        t.push_row(vec![i.to_string(), fmt_f64(*tv)]);
    }
    Ok(t)
}
