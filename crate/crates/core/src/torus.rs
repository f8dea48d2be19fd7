//! Tree-indexed random walks in the discrete torus (Z/NZ)^d and the three
//! headline experiments: visiting probability, local configuration law,
//! and cover time.

use crate::dist::{JumpDist, OffspringDist, Site};
use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::rng::Rng;
use crate::tree::sample_gw_conditioned;
use serde::Serialize;

/// Torus geometry.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TorusConfig {
    pub n_side: usize,
    pub d: usize,
}

impl TorusConfig {
    pub fn new(n_side: usize, d: usize) -> Result<TorusConfig> {
        if n_side < 3 {
            return Err(Error::precondition("torus side length must be at least 3"));
        }
        if d == 0 || d > crate::dist::MAX_DIM {
            return Err(Error::precondition("torus dimension out of range"));
        }
        let volume = (n_side as f64).powi(d as i32);
        if volume > 2.5e8 {
            return Err(Error::precondition("torus volume too large for desk scale"));
        }
        Ok(TorusConfig { n_side, d })
    }

    pub fn volume(&self) -> usize {
        self.n_side.pow(self.d as u32)
    }

    /// The limit theorems assume d ≥ 5; lower dimensions are allowed for
    /// smoke runs but flagged.
    pub fn limit_regime(&self) -> bool {
        self.d >= 5
    }

    /// Mixed-radix index of a lattice site reduced mod N.
    #[inline]
    pub fn index_of(&self, s: Site) -> usize {
        let n = self.n_side as i32;
        let mut idx = 0usize;
        for i in 0..self.d {
            let c = (s[i] as i32).rem_euclid(n) as usize;
            idx = idx * self.n_side + c;
        }
        idx
    }
}

/// Config echo carried by every experiment result.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub n_side: usize,
    pub d: usize,
    pub tree_size: Option<u64>,
    pub level_u: Option<f64>,
    pub k_sites: String,
    pub samples: u64,
    pub seed: u64,
}

/// A scalar Monte Carlo outcome with its Bernoulli standard error.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
    pub config: ConfigEcho,
}

fn echo_sites(k: &[Site], d: usize) -> String {
    k.iter()
        .map(|s| {
            (0..d)
                .map(|i| s[i].to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Nearest tree size to `n` with positive probability. Presets have
/// µ(1) > 0, which makes every size reachable through a path tree.
pub fn nearest_positive_size(mu: &OffspringDist, n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::precondition("tree size must be positive"));
    }
    if mu.p(1) > 0.0 {
        return Ok(n);
    }
    let exact = Exact::new(mu.clone());
    for delta in 0..64i64 {
        for cand in [n as i64 - delta, n as i64 + delta] {
            if cand >= 1 && cand <= 100_000 && exact.tree_size_pmf(cand as usize)? > 0.0 {
                return Ok(cand as u64);
            }
        }
    }
    Err(Error::precondition(
        "no reachable tree size near the requested value",
    ))
}

// Streams one size-n tree-indexed torus walk in DFS order, calling
// `visit(site_index)` for every vertex. Returns false from `visit` to stop
// early.
fn stream_torus_walk<F: FnMut(usize) -> bool>(
    mu: &OffspringDist,
    theta: &JumpDist,
    torus: &TorusConfig,
    n: usize,
    start_index: usize,
    rng: &mut Rng,
    mut visit: F,
) {
    let tree = sample_gw_conditioned(mu, n, rng);
    let out = tree.out_degrees();
    let nn = torus.n_side as i32;
    let d = torus.d;
    // decode the start index into coordinates
    let mut start = [0i32; crate::dist::MAX_DIM];
    {
        let mut rem = start_index;
        for i in (0..d).rev() {
            start[i] = (rem % torus.n_side) as i32;
            rem /= torus.n_side;
        }
    }
    // DFS with a stack of (site, remaining children)
    let mut stack: Vec<([i32; crate::dist::MAX_DIM], u32)> = Vec::with_capacity(64);
    let mut site = start;
    for (i, &deg) in out.iter().enumerate() {
        if i > 0 {
            let (psite, _) = loop {
                let top = stack.last_mut().expect("tree walk stack");
                if top.1 == 0 {
                    stack.pop();
                } else {
                    top.1 -= 1;
                    break *stack.last().expect("nonempty");
                }
            };
            let step = theta.sample_jump(rng);
            site = psite;
            for j in 0..d {
                let mut c = site[j] + step[j] as i32;
                if c < 0 {
                    c += nn;
                } else if c >= nn {
                    c -= nn;
                }
                site[j] = c;
            }
        }
        let mut idx = 0usize;
        for j in 0..d {
            idx = idx * torus.n_side + site[j] as usize;
        }
        if !visit(idx) {
            return;
        }
        if deg > 0 {
            stack.push((site, deg));
        }
    }
}

/// Counts, over `samples` walks, how often each subset of `k_sites` equals
/// the visited part of K: result[mask] = #samples with exactly that hit
/// pattern. Uniform starting point; replica-deterministic.
pub fn hit_mask_counts(
    mu: &OffspringDist,
    theta: &JumpDist,
    torus: &TorusConfig,
    n: u64,
    k_sites: &[Site],
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<u64>> {
    if k_sites.is_empty() || k_sites.len() > 16 {
        return Err(Error::precondition("query set must have 1..=16 sites"));
    }
    let n = nearest_positive_size(mu, n)? as usize;
    let k_idx: Vec<usize> = k_sites.iter().map(|&s| torus.index_of(s)).collect();
    if k_idx.len() != {
        let mut u = k_idx.clone();
        u.sort_unstable();
        u.dedup();
        u.len()
    } {
        return Err(Error::precondition(
            "query sites collide on the torus (|K| must stay well below N^d)",
        ));
    }
    let volume = torus.volume() as u64;
    if k_idx.len() as u64 * 8 >= volume {
        return Err(Error::precondition("query set must be much smaller than the torus"));
    }
    let full: u32 = if k_idx.len() == 32 { u32::MAX } else { (1u32 << k_idx.len()) - 1 };
    let counts = crate::parallel::fold_replicas(
        workers,
        samples,
        64,
        |r, acc: &mut Vec<u64>| {
            if acc.is_empty() {
                acc.resize(1 << k_idx.len(), 0);
            }
            let mut rng = Rng::for_replica(seed, r);
            let start = rng.below(volume) as usize;
            let mut mask = 0u32;
            stream_torus_walk(mu, theta, torus, n, start, &mut rng, |idx| {
                for (b, &ki) in k_idx.iter().enumerate() {
                    if idx == ki {
                        mask |= 1 << b;
                    }
                }
                mask != full
            });
            acc[mask as usize] += 1;
        },
        |a: &mut Vec<u64>, b| {
            if a.is_empty() {
                *a = b;
            } else {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        },
    );
    Ok(counts)
}

fn bernoulli_result(
    hits: u64,
    samples: u64,
    scale: f64,
    config: ConfigEcho,
) -> ExperimentResult {
    let p = hits as f64 / samples as f64;
    let se = (p * (1.0 - p) / samples as f64).sqrt();
    ExperimentResult {
        estimate: scale * p,
        stderr: scale * se,
        samples,
        config,
    }
}

/// Scaled visiting probability (N^d/n)·P[Range ∩ φ(K) ≠ ∅] for a size-n
/// walk from a uniform start.
pub fn visit_probability(
    mu: &OffspringDist,
    theta: &JumpDist,
    torus: &TorusConfig,
    n: u64,
    k_sites: &[Site],
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<ExperimentResult> {
    let vol = torus.volume() as f64;
    let nf = n as f64;
    // n must sit inside [N^{α₁}, N^{α₂}] with 0 < α₁ < α₂ < d
    let nn = torus.n_side as f64;
    if nf < nn.powf(0.25) || nf > vol / nn.powf(0.25) {
        return Err(Error::precondition(format!(
            "visit_probability: n = {n} outside the small-walk window for N = {}",
            torus.n_side
        )));
    }
    let counts = hit_mask_counts(mu, theta, torus, n, k_sites, samples, seed, workers)?;
    let hits = samples - counts[0];
    Ok(bernoulli_result(
        hits,
        samples,
        vol / nf,
        ConfigEcho {
            n_side: torus.n_side,
            d: torus.d,
            tree_size: Some(n),
            level_u: None,
            k_sites: echo_sites(k_sites, torus.d),
            samples,
            seed,
        },
    ))
}

/// Avoidance probability P[Range ∩ φ(K) = ∅] at level u (n = round(u N^d)).
pub fn avoidance_probability(
    mu: &OffspringDist,
    theta: &JumpDist,
    torus: &TorusConfig,
    u: f64,
    k_sites: &[Site],
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<ExperimentResult> {
    if u <= 0.0 {
        return Err(Error::precondition("level u must be positive"));
    }
    let n = (u * torus.volume() as f64).round().max(1.0) as u64;
    let counts = hit_mask_counts(mu, theta, torus, n, k_sites, samples, seed, workers)?;
    Ok(bernoulli_result(
        counts[0],
        samples,
        1.0,
        ConfigEcho {
            n_side: torus.n_side,
            d: torus.d,
            tree_size: Some(n),
            level_u: Some(u),
            k_sites: echo_sites(k_sites, torus.d),
            samples,
            seed,
        },
    ))
}

/// Exact-configuration probability P[Range ∩ φ(K) = φ(A)], A given as a
/// bitmask over `k_sites`. |K| ≤ 3 keeps the inclusion–exclusion
/// cross-checks affordable.
pub fn local_configuration(
    mu: &OffspringDist,
    theta: &JumpDist,
    torus: &TorusConfig,
    u: f64,
    k_sites: &[Site],
    a_mask: u32,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<ExperimentResult> {
    if k_sites.len() > 3 {
        return Err(Error::precondition(
            "local_configuration guard: |K| must be at most 3",
        ));
    }
    if a_mask >= (1u32 << k_sites.len()) {
        return Err(Error::precondition("A must be a subset of K"));
    }
    if u <= 0.0 {
        return Err(Error::precondition("level u must be positive"));
    }
    let n = (u * torus.volume() as f64).round().max(1.0) as u64;
    let counts = hit_mask_counts(mu, theta, torus, n, k_sites, samples, seed, workers)?;
    Ok(bernoulli_result(
        counts[a_mask as usize],
        samples,
        1.0,
        ConfigEcho {
            n_side: torus.n_side,
            d: torus.d,
            tree_size: Some(n),
            level_u: Some(u),
            k_sites: echo_sites(k_sites, torus.d),
            samples,
            seed,
        },
    ))
}

/// One grid point of the cover experiment.
#[derive(Clone, Debug, Serialize)]
pub struct CoverPoint {
    pub n: u64,
    pub p_cover: f64,
    pub stderr: f64,
    pub mean_covered_fraction: f64,
    pub samples: u64,
}

/// Empirical cover probability P[Range = T_N] over a grid of walk sizes,
/// with the covered-fraction distribution summarized by its mean.
pub fn cover_experiment(
    mu: &OffspringDist,
    theta: &JumpDist,
    torus: &TorusConfig,
    n_grid: &[u64],
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<CoverPoint>> {
    let volume = torus.volume();
    let words = volume.div_ceil(64);
    let mut out = Vec::new();
    for (gi, &n_req) in n_grid.iter().enumerate() {
        let n = nearest_positive_size(mu, n_req)?;
        #[derive(Default)]
        struct Acc {
            covered: u64,
            frac_sum: f64,
        }
        let acc = crate::parallel::fold_replicas(
            workers,
            samples,
            8,
            |r, acc: &mut Acc| {
                let mut rng = Rng::for_replica(seed.wrapping_add(gi as u64) , r);
                if (n as usize) < volume {
                    // pigeonhole: cannot cover; still count the fraction
                    let mut bitmap = vec![0u64; words];
                    let mut covered = 0usize;
                    let start = rng.below(volume as u64) as usize;
                    stream_torus_walk(mu, theta, torus, n as usize, start, &mut rng, |idx| {
                        let w = idx / 64;
                        let b = 1u64 << (idx % 64);
                        if bitmap[w] & b == 0 {
                            bitmap[w] |= b;
                            covered += 1;
                        }
                        true
                    });
                    acc.frac_sum += covered as f64 / volume as f64;
                } else {
                    let mut bitmap = vec![0u64; words];
                    let mut covered = 0usize;
                    let start = rng.below(volume as u64) as usize;
                    stream_torus_walk(mu, theta, torus, n as usize, start, &mut rng, |idx| {
                        let w = idx / 64;
                        let b = 1u64 << (idx % 64);
                        if bitmap[w] & b == 0 {
                            bitmap[w] |= b;
                            covered += 1;
                        }
                        covered < volume
                    });
                    acc.frac_sum += covered as f64 / volume as f64;
                    acc.covered += u64::from(covered == volume);
                }
            },
            |a, b| {
                a.covered += b.covered;
                a.frac_sum += b.frac_sum;
            },
        );
        let p = acc.covered as f64 / samples as f64;
        out.push(CoverPoint {
            n,
            p_cover: p,
            stderr: (p * (1.0 - p) / samples as f64).sqrt(),
            mean_covered_fraction: acc.frac_sum / samples as f64,
            samples,
        });
    }
    Ok(out)
}

/// P[{x, y} ⊆ Range] for a size-n walk from a uniform start.
pub fn pair_visit_probability(
    mu: &OffspringDist,
    theta: &JumpDist,
    torus: &TorusConfig,
    n: u64,
    x: Site,
    y: Site,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<ExperimentResult> {
    if torus.index_of(x) == torus.index_of(y) {
        return Err(Error::precondition("pair_visit needs two distinct sites"));
    }
    let counts = hit_mask_counts(mu, theta, torus, n, &[x, y], samples, seed, workers)?;
    Ok(bernoulli_result(
        counts[3],
        samples,
        1.0,
        ConfigEcho {
            n_side: torus.n_side,
            d: torus.d,
            tree_size: Some(n),
            level_u: None,
            k_sites: echo_sites(&[x, y], torus.d),
            samples,
            seed,
        },
    ))
}

/// Exact total-variation distance to uniform of the θ-walk on the torus
/// after t steps, for t = 0..=t_max, by d-dimensional circular
/// convolution powers.
pub fn mixing_check(theta: &JumpDist, torus: &TorusConfig, t_max: usize) -> Result<Vec<f64>> {
    let volume = torus.volume();
    if volume > 2_000_000 {
        return Err(Error::precondition("mixing table too large"));
    }
    if theta.d() != torus.d {
        return Err(Error::precondition("dimension mismatch"));
    }
    let uniform = 1.0 / volume as f64;
    let mut dist = vec![0.0f64; volume];
    dist[0] = 1.0;
    // precompute atom offsets as signed per-axis deltas
    let n = torus.n_side;
    let mut tvs = Vec::with_capacity(t_max + 1);
    let tv = |dist: &[f64]| -> f64 {
        0.5 * dist.iter().map(|&p| (p - uniform).abs()).sum::<f64>()
    };
    tvs.push(tv(&dist));
    let mut next = vec![0.0f64; volume];
    // index decomposition strides
    let mut strides = vec![1usize; torus.d];
    for i in (0..torus.d.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * n;
    }
    for _ in 1..=t_max {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &(step, w) in theta.atoms() {
                // shift idx by step with wraparound per axis
                let mut j = 0usize;
                let mut rem = idx;
                for (ax, &stride) in strides.iter().enumerate() {
                    let c = rem / stride;
                    rem %= stride;
                    let mut cc = c as i64 + step[ax] as i64;
                    if cc < 0 {
                        cc += n as i64;
                    } else if cc >= n as i64 {
                        cc -= n as i64;
                    }
                    j += cc as usize * stride;
                }
                next[j] += p * w;
            }
        }
        std::mem::swap(&mut dist, &mut next);
        tvs.push(tv(&dist));
    }
    Ok(tvs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ORIGIN;

    fn geo() -> OffspringDist {
        OffspringDist::geometric()
    }

    #[test]
    fn torus_config_guards() {
        assert!(TorusConfig::new(2, 5).is_err());
        assert!(TorusConfig::new(10, 0).is_err());
        let t = TorusConfig::new(5, 5).unwrap();
        assert_eq!(t.volume(), 3125);
        assert!(t.limit_regime());
        assert!(!TorusConfig::new(7, 3).unwrap().limit_regime());
    }

    #[test]
    fn single_vertex_walk_is_uniform() {
        let mu = geo();
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(4, 2).unwrap();
        // n = 1: the range is exactly the uniform start site
        let counts = hit_mask_counts(&mu, &theta, &torus, 1, &[ORIGIN], 64_000, 5, 1).unwrap();
        let p = counts[1] as f64 / 64_000.0;
        let expect = 1.0 / 16.0;
        let se = (expect * (1.0 - expect) / 64_000.0f64).sqrt();
        assert!((p - expect).abs() < 4.0 * se);
    }

    #[test]
    fn avoidance_u_to_zero_limit_exact() {
        // n = 1 gives P[avoid] = 1 − |K|/N^d exactly
        let mu = geo();
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(5, 2).unwrap();
        let mut e1 = ORIGIN;
        e1[0] = 1;
        let u = 1.0 / torus.volume() as f64; // n = 1
        let r = avoidance_probability(&mu, &theta, &torus, u, &[ORIGIN, e1], 40_000, 9, 1)
            .unwrap();
        let expect = 1.0 - 2.0 / 25.0;
        assert!((r.estimate - expect).abs() < 4.0 * r.stderr + 1e-12);
    }

    #[test]
    fn coverage_bounded_by_n_and_reproducible() {
        let mu = geo();
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(4, 2).unwrap();
        let grid = [8u64, 40];
        let a = cover_experiment(&mu, &theta, &torus, &grid, 200, 31, 1).unwrap();
        let b = cover_experiment(&mu, &theta, &torus, &grid, 200, 31, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.p_cover, y.p_cover);
            assert_eq!(x.mean_covered_fraction, y.mean_covered_fraction);
        }
        // n < N^d cannot cover
        assert_eq!(a[0].p_cover, 0.0);
        assert!(a[0].mean_covered_fraction <= 8.0 / 16.0 + 1e-12);
    }

    #[test]
    fn mask_counts_sum_and_consistency() {
        let mu = geo();
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(5, 2).unwrap();
        let mut e1 = ORIGIN;
        e1[0] = 1;
        let samples = 10_000u64;
        let counts =
            hit_mask_counts(&mu, &theta, &torus, 60, &[ORIGIN, e1], samples, 77, 1).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), samples);
        // A = ∅ configuration equals avoidance
        let r = local_configuration(
            &mu,
            &theta,
            &torus,
            60.0 / torus.volume() as f64,
            &[ORIGIN, e1],
            0,
            samples,
            77,
            1,
        )
        .unwrap();
        assert!((r.estimate - counts[0] as f64 / samples as f64).abs() < 1e-12);
    }

    #[test]
    fn visit_probability_guards() {
        let mu = geo();
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(5, 2).unwrap();
        // n too large for the small-walk regime
        assert!(visit_probability(&mu, &theta, &torus, 24, &[ORIGIN], 100, 1, 1).is_err());
    }

    #[test]
    fn mixing_exact_values() {
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(5, 2).unwrap();
        let tvs = mixing_check(&theta, &torus, 60).unwrap();
        // t = 0: TV = 1 − N^{-d}
        assert!((tvs[0] - (1.0 - 1.0 / 25.0)).abs() < 1e-12);
        // monotone non-increasing
        for w in tvs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // essentially mixed by t = 10·N²
        assert!(tvs[60].abs() < 0.01, "tv = {}", tvs[60]);
        // log-TV slope is negative (spectral gap proxy)
        let xs: Vec<f64> = (20..=40).map(|t| t as f64).collect();
        let ys: Vec<f64> = (20..=40).map(|t| tvs[t].max(1e-300).ln()).collect();
        let (slope, _, _) = crate::stats::linear_fit(&xs, &ys);
        assert!(slope < 0.0);
    }

    #[test]
    fn pair_visit_needs_distinct_sites() {
        let mu = geo();
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(5, 2).unwrap();
        assert!(
            pair_visit_probability(&mu, &theta, &torus, 20, ORIGIN, ORIGIN, 10, 1, 1).is_err()
        );
    }

    #[test]
    fn fixed_seed_bitmap_reproducibility() {
        let mu = geo();
        let theta = JumpDist::lazy_srw(2);
        let torus = TorusConfig::new(4, 2).unwrap();
        let a = hit_mask_counts(&mu, &theta, &torus, 30, &[ORIGIN], 2_000, 123, 1).unwrap();
        let b = hit_mask_counts(&mu, &theta, &torus, 30, &[ORIGIN], 2_000, 123, 3).unwrap();
        assert_eq!(a, b);
    }
}
