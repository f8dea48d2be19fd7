//! Cross-module oracle checks: exact DP against enumeration and closed
//! forms, samplers against the exact engine, and the fitted-constant
//! stability checks behind the asymptotic bounds.

use brint::dist::{JumpDist, OffspringDist, Site, ORIGIN};
use brint::exact::{gaussian_density, Exact};
use brint::rng::Rng;
use brint::stats::{chi2_gof, chi2_two_sample, linear_fit};
use brint::tree::{
    enumerate_trees, gw_weight, record_height_check, sample_gw_conditioned, PlaneTree,
};

#[test]
fn conditioned_sampler_matches_weights_tri_n6() {
    let mu = OffspringDist::triangular();
    let trees = enumerate_trees(6);
    let weights: Vec<f64> = trees.iter().map(|t| gw_weight(&mu, t)).collect();
    let total: f64 = weights.iter().sum();
    let keep: Vec<usize> = (0..trees.len()).filter(|&i| weights[i] > 0.0).collect();
    let probs: Vec<f64> = keep.iter().map(|&i| weights[i] / total).collect();
    let index: std::collections::HashMap<Vec<u32>, usize> = keep
        .iter()
        .enumerate()
        .map(|(j, &i)| (trees[i].out_degrees().to_vec(), j))
        .collect();
    let mut rng = Rng::seed_from_u64(60);
    let mut counts = vec![0u64; keep.len()];
    for _ in 0..200_000 {
        let t = sample_gw_conditioned(&mu, 6, &mut rng);
        counts[index[t.out_degrees()]] += 1;
    }
    let r = chi2_gof(&counts, &probs, 5.0);
    assert!(r.p_value > 0.001, "p = {}", r.p_value);
}

#[test]
fn walk_marginal_of_conditioned_tree_matches_dp() {
    // the L-walk marginal of T^n at m equals the conditioned marginal, both
    // in the enumeration regime and statistically at n = 400
    let mu = OffspringDist::geometric();
    let exact = Exact::new(mu.clone());
    let n = 10;
    let m = 4;
    let trees = enumerate_trees(n);
    let total: f64 = trees.iter().map(|t| gw_weight(&mu, t)).sum();
    let mut by_h: std::collections::HashMap<i64, f64> = Default::default();
    for t in &trees {
        let w = gw_weight(&mu, t);
        let steps = t.encode();
        let h: i64 = steps[..m].iter().sum();
        *by_h.entry(h).or_default() += w / total;
    }
    for (&h, &p) in &by_h {
        let dp = exact.conditioned_marginal(n, m, h).unwrap();
        assert!((dp - p).abs() < 1e-12, "h={h}: {dp} vs {p}");
    }

    let n = 400;
    let m = 160;
    let mut rng = Rng::seed_from_u64(61);
    let samples = 40_000u64;
    let hmax = 60i64;
    let mut counts = vec![0u64; hmax as usize + 1];
    for _ in 0..samples {
        let t = sample_gw_conditioned(&mu, n, &mut rng);
        let h: i64 = t.encode()[..m].iter().sum();
        counts[h.min(hmax) as usize] += 1;
    }
    let mut probs: Vec<f64> = (0..hmax)
        .map(|h| exact.conditioned_marginal(n, m, h).unwrap())
        .collect();
    let tail = 1.0 - probs.iter().sum::<f64>();
    probs.push(tail.max(0.0));
    let r = chi2_gof(&counts, &probs, 5.0);
    assert!(r.p_value > 0.001, "p = {}", r.p_value);
}

#[test]
fn local_clt_bound_at_n2000() {
    // |P(L(n)=x) − p̄_n(x)| ≤ 0.05/√n over |x| ≤ 3√n for µ_geo
    let mu = OffspringDist::geometric();
    let sigma = mu.sigma2().sqrt();
    let exact = Exact::new(mu);
    let n = 2000usize;
    let lim = (3.0 * (n as f64).sqrt()) as i64;
    let mut worst = 0.0f64;
    for x in -lim..=lim {
        let diff = (exact.step_prob(n, x) - gaussian_density(n, x as f64, sigma)).abs();
        worst = worst.max(diff);
    }
    let bound = 0.05 / (n as f64).sqrt();
    assert!(worst <= bound, "worst {worst} > {bound}");
}

#[test]
fn conditioned_marginal_bound_constant_is_stable() {
    // P^n[L(m)=h] ≤ C·(h+1)²/A^{3/2}: the fitted C is stable within ±20%
    // across n ∈ {200, 400, 800} with m = n/2
    let mu = OffspringDist::geometric();
    let exact = Exact::new(mu);
    let mut cs = Vec::new();
    for n in [200usize, 400, 800] {
        let m = n / 2;
        let a = (m.min(n - m)) as f64;
        let (_, hi) = exact.bridge_window(m);
        let mut c = 0.0f64;
        for h in 0..=hi {
            let p = exact.conditioned_marginal(n, m, h).unwrap();
            let envelope = (h as f64 + 1.0).powi(2) / a.powf(1.5);
            c = c.max(p / envelope);
        }
        cs.push(c);
    }
    let cmax = cs.iter().cloned().fold(0.0, f64::max);
    let cmin = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        cmax / cmin < 1.2,
        "fitted constants vary too much: {cs:?}"
    );
}

#[test]
fn record_height_identity_and_mean() {
    let mu = OffspringDist::geometric();
    let mut rng = Rng::seed_from_u64(62);
    let rep = record_height_check(&mu, 100, 60_000, &mut rng);
    let r = chi2_two_sample(&rep.forest_heights, &rep.record_counts, 5.0);
    assert!(r.p_value > 0.001, "p = {}", r.p_value);
    // E[L(R_1)] = σ²/2 = 1 for the geometric preset
    let e = rep.first_record_mean;
    assert!(
        (e.mean() - 1.0).abs() < 4.0 * e.stderr(),
        "mean {} ± {}",
        e.mean(),
        e.stderr()
    );
    assert!(rep.first_record_truncated < 60_000 / 100);
}

#[test]
fn unrooted_tail_and_pointed_law() {
    // P(|H_l| ≥ N) decays like N^{-1/2}: fit the exponent over a grid
    let mu = OffspringDist::geometric();
    let mut rng = Rng::seed_from_u64(63);
    let l = 2usize;
    let grid = [100usize, 400, 1600, 6400];
    let samples = 30_000u64;
    let mut exceed = vec![0u64; grid.len()];
    for _ in 0..samples {
        let (pt, _) = brint::infinite::gen_unrooted(&mu, l, &mut rng, 100_000);
        if let brint::tree::PointedTree::Pointed { tree, .. } = pt {
            for (i, &g) in grid.iter().enumerate() {
                if tree.len() >= g {
                    exceed[i] += 1;
                }
            }
        }
    }
    let xs: Vec<f64> = grid.iter().map(|&g| (g as f64).ln()).collect();
    let ys: Vec<f64> = exceed
        .iter()
        .map(|&e| ((e.max(1)) as f64 / samples as f64).ln())
        .collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    assert!(
        (slope + 0.5).abs() < 0.2,
        "tail exponent {slope} (r² = {r2})"
    );
}

#[test]
fn unrooted_spine_law_matches_vertex_tree() {
    // the unrooted tree restricted to its first spine level reproduces the
    // vertex tree's spine law: compare offspring counts of u_1 vs s_1
    let mu = OffspringDist::geometric();
    let mut rng = Rng::seed_from_u64(64);
    let samples = 40_000u64;
    let kcap = 8usize;
    let mut unrooted = vec![0u64; kcap + 1];
    for _ in 0..samples {
        let (pt, _) = brint::infinite::gen_unrooted(&mu, 1, &mut rng, 100_000);
        if let brint::tree::PointedTree::Pointed { tree, .. } = pt {
            unrooted[(tree.out_degree(0) as usize).min(kcap)] += 1;
        }
    }
    let mut vertex = vec![0u64; kcap + 1];
    for _ in 0..samples {
        let st = brint::infinite::gen_tv(
            &mu,
            2,
            &mut rng,
            brint::infinite::BushPolicy::MarkBig { cap: 2 },
        );
        let spine = st.spine();
        vertex[st.children(spine[1]).len().min(kcap)] += 1;
    }
    let r = chi2_two_sample(&unrooted, &vertex, 5.0);
    assert!(r.p_value > 0.001, "p = {}", r.p_value);
}

#[test]
fn pair_distance_expectation_constant_stable() {
    // E[# vertex pairs at distance k] ≤ C·k·n: fitted C stable across n
    let mu = OffspringDist::geometric();
    let mut rng = Rng::seed_from_u64(65);
    let k = 12usize;
    let mut cs = Vec::new();
    for n in [256usize, 512, 1024] {
        let mut total_pairs = 0u64;
        let reps = 60;
        for _ in 0..reps {
            let t = sample_gw_conditioned(&mu, n, &mut rng);
            // count pairs at distance k through the profile of each vertex
            // pair (quadratic is fine at these sizes)
            for u in 0..n {
                for v in (u + 1)..n {
                    if t.graph_distance(u, v) == k {
                        total_pairs += 1;
                    }
                }
            }
        }
        let mean = total_pairs as f64 / reps as f64;
        cs.push(mean / (k as f64 * n as f64));
    }
    let cmax = cs.iter().cloned().fold(0.0, f64::max);
    let cmin = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(cmax / cmin < 1.6, "constants {cs:?}");
}

#[test]
fn tree_hit_probability_distance_exponent() {
    // P[size-n tree walk from distance r hits the origin] decays with the
    // fitted exponent −(d−4) ± 0.5 at d = 5
    // the r^{4−d} regime needs n far above r^4
    let mu = OffspringDist::geometric();
    let theta = JumpDist::lazy_srw(5);
    let mut rng = Rng::seed_from_u64(66);
    let n = 400_000usize;
    let grid = [2i16, 3, 4];
    let samples = 6_000u64;
    let target = [ORIGIN];
    let mut hits = vec![0u64; grid.len()];
    for (i, &r) in grid.iter().enumerate() {
        let mut start: Site = ORIGIN;
        start[0] = r;
        for _ in 0..samples {
            let t = sample_gw_conditioned(&mu, n, &mut rng);
            let st = brint::spatial::attach_walk(t, &theta, 0, start, &mut rng).unwrap();
            hits[i] += u64::from(st.hits(&target).hit);
        }
    }
    let xs: Vec<f64> = grid.iter().map(|&r| (r as f64).ln()).collect();
    let ys: Vec<f64> = hits
        .iter()
        .map(|&h| ((h.max(1)) as f64 / samples as f64).ln())
        .collect();
    let (slope, _, _) = linear_fit(&xs, &ys);
    assert!((slope + 1.0).abs() < 0.5, "exponent {slope}");
}

#[test]
fn leaf_probability_midpoint_approaches_mu0() {
    let mu = OffspringDist::geometric();
    let exact = Exact::new(mu);
    // a desk-scale shadow of the full acceptance check
    let p = exact.leaf_probability(1000, 500).unwrap();
    assert!((p - 0.5).abs() < 0.02, "p = {p}");
}

#[test]
fn decompose_success_monotone_in_n() {
    // success probability rises along the scaled grid N ∈ {6, 8, 10}
    let mu = OffspringDist::geometric();
    let mut rates = Vec::new();
    for (gi, n_base) in [6.0f64, 8.0, 10.0].into_iter().enumerate() {
        let params = brint::decompose::DecomposeParams {
            n_base,
            alpha: 2.01,
            beta: 4.99,
            delta: 0.01,
        };
        let n = n_base.powi(5) as usize;
        let mut ok = 0;
        let runs = 60;
        let mut rng = Rng::seed_from_u64(670 + gi as u64);
        for _ in 0..runs {
            let t = sample_gw_conditioned(&mu, n, &mut rng);
            ok += u64::from(brint::decompose::decompose(&t, &params).unwrap().success);
        }
        rates.push(ok as f64 / runs as f64);
    }
    let tau = brint::stats::kendall_tau(&[6.0, 8.0, 10.0], &rates);
    assert!(tau > 0.0, "rates {rates:?}, tau {tau}");
}

#[test]
fn avoidance_monotone_in_level() {
    let mu = OffspringDist::geometric();
    let theta = JumpDist::lazy_srw(5);
    let torus = brint::torus::TorusConfig::new(5, 5).unwrap();
    let mut results = Vec::new();
    for (i, u) in [0.1f64, 0.25, 0.5].into_iter().enumerate() {
        let r = brint::torus::avoidance_probability(
            &mu,
            &theta,
            &torus,
            u,
            &[ORIGIN],
            4_000,
            80 + i as u64,
            1,
        )
        .unwrap();
        results.push(r);
    }
    for w in results.windows(2) {
        let slack = 3.0 * (w[0].stderr + w[1].stderr);
        assert!(
            w[1].estimate <= w[0].estimate + slack,
            "{} then {}",
            w[0].estimate,
            w[1].estimate
        );
    }
}

#[test]
fn visit_probability_translation_invariant() {
    let mu = OffspringDist::geometric();
    let theta = JumpDist::lazy_srw(5);
    let torus = brint::torus::TorusConfig::new(7, 5).unwrap();
    let n = 400u64;
    let mut rng = Rng::seed_from_u64(82);
    let mut results = Vec::new();
    for i in 0..5 {
        let mut site = ORIGIN;
        for c in site.iter_mut().take(5) {
            *c = rng.below(7) as i16;
        }
        let r = brint::torus::visit_probability(
            &mu,
            &theta,
            &torus,
            n,
            &[site],
            50_000,
            190 + i,
            1,
        )
        .unwrap();
        results.push(r);
    }
    let mean = results.iter().map(|r| r.estimate).sum::<f64>() / 5.0;
    for r in &results {
        assert!(
            (r.estimate - mean).abs() <= 4.5 * r.stderr,
            "estimate {} vs mean {mean}",
            r.estimate
        );
    }
}

#[test]
fn interlacement_thinning_dispersion_and_inclusion_exclusion() {
    use brint::bcap::*;
    let mu = OffspringDist::geometric();
    let theta = JumpDist::lazy_srw(5);
    let mut e1: Site = ORIGIN;
    e1[0] = 1;
    let pts = vec![ORIGIN, e1];
    let region = Region::Points(pts.clone());
    let params = EsParams {
        r_stop: 8,
        samples: 6_000,
        aux_tail_samples: 150,
        aux_bush_samples: 30_000,
        ..Default::default()
    };
    let mut rng = Rng::seed_from_u64(70);
    let profiles = fit_profiles(&mu, &theta, &region, &params, &mut rng);
    let u = 1.0;
    let runs = 6_000u64;
    let mut accepted = Vec::with_capacity(runs as usize);
    let mut mask_counts = [0u64; 4];
    for _ in 0..runs {
        let draw =
            sample_interlacement_local(&pts, u, &mu, &theta, &params, &profiles, &mut rng)
                .unwrap();
        accepted.push(draw.accepted as f64);
        let mut mask = 0usize;
        for (i, p) in pts.iter().enumerate() {
            if draw.hit_set.contains(p) {
                mask |= 1 << i;
            }
        }
        mask_counts[mask] += 1;
    }
    // dispersion: accepted counts should be Poisson (variance ≈ mean)
    let mean = accepted.iter().sum::<f64>() / runs as f64;
    let var = accepted.iter().map(|&a| (a - mean) * (a - mean)).sum::<f64>()
        / (runs as f64 - 1.0);
    let ratio = var / mean;
    // index-of-dispersion fluctuates by ~√(2/n)
    assert!(
        (ratio - 1.0).abs() < 5.0 * (2.0 / runs as f64).sqrt(),
        "dispersion {ratio}"
    );

    // inclusion–exclusion: P[I ∩ K = A] from capacities, A = {0}
    let cap_pair = estimate_bcap(&region, &mu, &theta, &params, 71).unwrap();
    let cap_e1 =
        estimate_bcap(&Region::Points(vec![e1]), &mu, &theta, &params, 72).unwrap();
    let cap_o =
        estimate_bcap(&Region::Points(vec![ORIGIN]), &mu, &theta, &params, 73).unwrap();
    // P[I∩K = {0}] = exp(−u·BCap({e1})) − exp(−u·BCap(K))
    let expect = (-u * cap_e1.bcap).exp() - (-u * cap_pair.bcap).exp();
    let got = mask_counts[1] as f64 / runs as f64;
    let se = (got * (1.0 - got) / runs as f64).sqrt();
    let slack = 3.0 * se + u * (cap_pair.residual + cap_e1.residual) + 0.02;
    assert!((got - expect).abs() < slack, "got {got}, expect {expect}");

    // screening as probability ordering: P[K ∪ K' vacant] = P[K' vacant]
    // when K' separates K; at distance one in d = 5 the singleton {0} is
    // separated by its full unit shell, which is too big for a desk run,
    // so this ordering is exercised through the monotonicity of avoidance
    // in the torus suite instead; here check the two-point consistency
    // P[K vacant] ≤ P[{0} vacant] + 3σ
    let p_k_vacant = mask_counts[0] as f64 / runs as f64;
    let p_o_vacant = (mask_counts[0] + mask_counts[2]) as f64 / runs as f64;
    assert!(p_k_vacant <= p_o_vacant);
    let _ = cap_o;
}

#[test]
fn covariance_positive_association_and_decay() {
    let mu = OffspringDist::geometric();
    let theta = JumpDist::lazy_srw(5);
    let params = brint::bcap::EsParams {
        r_stop: 8,
        samples: 2_000,
        aux_tail_samples: 100,
        aux_bush_samples: 20_000,
        ..Default::default()
    };
    let (dists, covs, _slope) = brint::bcap::covariance_profile(
        1.0,
        &[1, 3],
        &mu,
        &theta,
        &params,
        30_000,
        75,
    )
    .unwrap();
    // positive association within noise, and decay with distance
    for (d, c) in dists.iter().zip(&covs) {
        assert!(*c > -0.01, "cov at distance {d} is {c}");
    }
    assert!(covs[0] > covs[1] - 0.01, "no decay: {covs:?}");
}

#[test]
fn displacement_tail_slope_stability() {
    let mu = OffspringDist::geometric();
    let theta = JumpDist::lazy_srw(5);
    let mut rng = Rng::seed_from_u64(77);
    let ls = [4, 6, 8, 11, 14];
    let mut slopes = Vec::new();
    for n in [512usize, 1024] {
        let tails = brint::spatial::displacement_tail(&mu, &theta, n, &ls, 1_500, &mut rng);
        // log tail against l^{4/3}/n^{1/3}
        let xs: Vec<f64> = ls
            .iter()
            .map(|&l| (l as f64).powf(4.0 / 3.0) / (n as f64).powf(1.0 / 3.0))
            .collect();
        let ys: Vec<f64> = tails.iter().map(|&t| t.max(1e-6).ln()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        assert!(slope < 0.0 && r2 > 0.9, "n={n}: slope {slope}, r² {r2}");
        slopes.push(slope);
    }
    let ratio = slopes[0] / slopes[1];
    assert!(ratio > 0.5 && ratio < 2.0, "slopes {slopes:?}");
}

#[test]
fn spatial_reflection_symmetry() {
    // hit probabilities of a set and its reflection through the start site
    // agree for symmetric θ
    let mu = OffspringDist::geometric();
    let theta = JumpDist::lazy_srw(5);
    let mut rng = Rng::seed_from_u64(78);
    let mut k_plus: Site = ORIGIN;
    k_plus[0] = 2;
    k_plus[1] = 1;
    let mut k_minus: Site = ORIGIN;
    k_minus[0] = -2;
    k_minus[1] = -1;
    let samples = 30_000u64;
    let (mut hp, mut hm) = (0u64, 0u64);
    for _ in 0..samples {
        let t = sample_gw_conditioned(&mu, 64, &mut rng);
        let st = brint::spatial::attach_walk(t, &theta, 0, ORIGIN, &mut rng).unwrap();
        hp += u64::from(st.hits(&[k_plus]).hit);
        hm += u64::from(st.hits(&[k_minus]).hit);
    }
    let p = brint::stats::two_proportion_p(hp, samples, hm, samples);
    assert!(p > 0.001, "reflection asymmetry: p = {p}");
}

#[test]
fn gw_overflow_fraction_matches_tail_sum() {
    // overflow rate of the capped sampler ≈ Σ_{n>cap} P(|T| = n)
    let mu = OffspringDist::triangular();
    let exact = Exact::new(mu.clone());
    let cap = 400usize;
    let mut tail = 1.0;
    for n in 1..=cap {
        tail -= exact.tree_size_pmf(n).unwrap();
    }
    let mut rng = Rng::seed_from_u64(79);
    let samples = 40_000u64;
    let mut overflows = 0u64;
    for _ in 0..samples {
        if matches!(
            brint::tree::sample_gw(&mu, cap, &mut rng),
            brint::tree::GwSample::Overflow
        ) {
            overflows += 1;
        }
    }
    let got = overflows as f64 / samples as f64;
    let se = (tail * (1.0 - tail) / samples as f64).sqrt();
    assert!((got - tail).abs() < 4.0 * se + 1e-3, "got {got}, tail {tail}");
}

#[test]
fn harvest_discard_mass_is_small_for_scaled_parameters() {
    // harvesting with a paper-scaled floor discards little mass on most
    // hosts
    let mu = OffspringDist::geometric();
    let mut rng = Rng::seed_from_u64(85);
    let n = 4096usize;
    let floor = 8usize;
    let mut ok = 0;
    let runs = 100;
    for _ in 0..runs {
        let t = sample_gw_conditioned(&mu, n, &mut rng);
        let h = brint::decompose::harvest_interval(&t, 0, n - 1, floor);
        if (h.discarded_mass as f64) < (n as f64) / 4.0 {
            ok += 1;
        }
    }
    assert!(ok >= 85, "only {ok}/{runs} runs kept the discard small");
}

#[test]
fn plane_tree_serializes_as_out_degree_lines() {
    // canonical serialization: one integer per vertex in DFS order
    let t = PlaneTree::from_out_degrees(vec![2, 1, 0, 0]).unwrap();
    let lines: Vec<String> = t.out_degrees().iter().map(|d| d.to_string()).collect();
    let blob = lines.join("\n");
    let parsed: Vec<u32> = blob.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(PlaneTree::from_out_degrees(parsed).unwrap(), t);
}
