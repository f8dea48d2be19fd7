//! Offspring and jump distributions.
//!
//! `OffspringDist` is a critical finite-support child-count law µ together
//! with the two derived laws everything else is built from: the size-biased
//! law µ̃(k) = k·µ(k) and the walk-step law µ₋₁(j) = µ(j+1). `JumpDist` is a
//! symmetric finite-range lattice step law θ on Z^d.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Maximum lattice dimension supported by the packed site type.
pub const MAX_DIM: usize = 8;

/// A lattice point, packed as one i16 per coordinate. Coordinates beyond
/// the active dimension stay zero so equality and hashing work uniformly.
pub type Site = [i16; MAX_DIM];

/// The origin.
pub const ORIGIN: Site = [0; MAX_DIM];

/// Checked site addition; `None` on i16 overflow.
#[inline]
pub fn site_add(a: Site, b: Site) -> Option<Site> {
    let mut out = ORIGIN;
    for i in 0..MAX_DIM {
        out[i] = a[i].checked_add(b[i])?;
    }
    Some(out)
}

/// Builds a site from the first `d` coordinates of `coords`.
pub fn site_from(coords: &[i64]) -> Result<Site> {
    if coords.len() > MAX_DIM {
        return Err(Error::precondition(format!(
            "dimension {} exceeds max {}",
            coords.len(),
            MAX_DIM
        )));
    }
    let mut s = ORIGIN;
    for (i, &c) in coords.iter().enumerate() {
        s[i] = i16::try_from(c)
            .map_err(|_| Error::precondition(format!("coordinate {c} out of i16 range")))?;
    }
    Ok(s)
}

/// sup-norm distance between sites.
#[inline]
pub fn site_linf(a: Site, b: Site) -> i32 {
    let mut m = 0;
    for i in 0..MAX_DIM {
        m = m.max((a[i] as i32 - b[i] as i32).abs());
    }
    m
}

/// Walker/Vose alias table for O(1) sampling from a finite pmf.
#[derive(Clone, Debug)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> AliasTable {
        let n = weights.len();
        assert!(n > 0);
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        let mut prob = vec![1.0f64; n];
        let mut alias = vec![0u32; n];
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        for i in large {
            prob[i] = 1.0;
        }
        for i in small {
            prob[i] = 1.0;
        }
        AliasTable { prob, alias }
    }

    #[inline]
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let i = rng.below_usize(self.prob.len());
        if rng.next_f64() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

/// Critical offspring distribution with finite support.
#[derive(Clone, Debug)]
pub struct OffspringDist {
    pmf: Vec<f64>,
    sigma2: f64,
    span: u32,
    name: String,
    alias: AliasTable,
    alias_size_biased: AliasTable,
}

impl OffspringDist {
    /// Validates and builds. Requires: Σµ(k)=1 within 1e-12, mean 1 within
    /// 1e-9, µ(0)>0, µ(1)<1, span 1, σ² > 0.
    pub fn new(pmf: Vec<f64>, name: impl Into<String>) -> Result<OffspringDist> {
        if pmf.is_empty() || pmf.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::precondition("offspring pmf must be nonnegative"));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::precondition(format!(
                "offspring pmf sums to {total}, not 1"
            )));
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
        if (mean - 1.0).abs() > 1e-9 {
            return Err(Error::precondition(format!(
                "offspring distribution is not critical: mean {mean} != 1"
            )));
        }
        if pmf[0] <= 0.0 {
            return Err(Error::precondition("offspring pmf needs mass at 0"));
        }
        if pmf.len() > 1 && pmf[1] >= 1.0 {
            return Err(Error::precondition("degenerate offspring distribution"));
        }
        let support: Vec<usize> = pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, _)| k)
            .collect();
        let mut span = 0u64;
        for w in support.windows(2) {
            span = gcd(span, (w[1] - w[0]) as u64);
        }
        for i in 0..support.len() {
            for j in (i + 1)..support.len() {
                span = gcd(span, (support[j] - support[i]) as u64);
            }
        }
        if span != 1 {
            return Err(Error::precondition(format!(
                "offspring span {span} != 1 is not supported"
            )));
        }
        let sigma2: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| (k as f64 - 1.0) * (k as f64 - 1.0) * p)
            .sum();
        if sigma2 <= 0.0 {
            return Err(Error::precondition("offspring variance must be positive"));
        }
        let alias = AliasTable::new(&pmf);
        let sb: Vec<f64> = pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).collect();
        let alias_size_biased = AliasTable::new(&sb);
        Ok(OffspringDist {
            pmf,
            sigma2,
            span: 1,
            name: name.into(),
            alias,
            alias_size_biased,
        })
    }

    /// Critical geometric law µ(k) = 2^{-(k+1)}, truncated at k = 64 with
    /// the tail mass (< 1e-19) folded into the last atom.
    pub fn geometric() -> OffspringDist {
        let kmax = 64usize;
        let mut pmf = vec![0.0; kmax + 1];
        for (k, p) in pmf.iter_mut().enumerate() {
            *p = 0.5f64.powi(k as i32 + 1);
        }
        // fold the tail so the total is exactly a geometric series sum of 1
        pmf[kmax] *= 2.0;
        OffspringDist::new(pmf, "geo").expect("geometric preset is valid")
    }

    /// µ(0) = 1/4, µ(1) = 1/2, µ(2) = 1/4.
    pub fn triangular() -> OffspringDist {
        OffspringDist::new(vec![0.25, 0.5, 0.25], "tri").expect("triangular preset is valid")
    }

    /// Preset lookup by name used in run configs.
    pub fn preset(name: &str) -> Result<OffspringDist> {
        match name {
            "geo" | "geometric" => Ok(OffspringDist::geometric()),
            "tri" | "triangular" => Ok(OffspringDist::triangular()),
            other => Err(Error::config(format!("unknown offspring preset '{other}'"))),
        }
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// µ(k), zero outside the stored support.
    #[inline]
    pub fn p(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn kmax(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn span(&self) -> u32 {
        self.span
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Size-biased law µ̃(k) = k·µ(k), indexed by k (entry 0 is 0). Sums to
    /// one because µ has mean one.
    pub fn size_biased(&self) -> Vec<f64> {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| k as f64 * p)
            .collect()
    }

    /// Walk-step law µ₋₁(j) = µ(j+1) for j ≥ -1, returned as
    /// (min_step, probs) with probs[i] = µ₋₁(min_step + i).
    pub fn lwalk_step(&self) -> (i64, Vec<f64>) {
        (-1, self.pmf.clone())
    }

    #[inline]
    pub fn sample_offspring(&self, rng: &mut Rng) -> u32 {
        self.alias.sample(rng) as u32
    }

    /// Draw from µ̃; always ≥ 1.
    #[inline]
    pub fn sample_size_biased(&self, rng: &mut Rng) -> u32 {
        self.alias_size_biased.sample(rng) as u32
    }

    /// Draw a walk step from µ₋₁; in -1..=kmax-1.
    #[inline]
    pub fn sample_lwalk_step(&self, rng: &mut Rng) -> i64 {
        self.alias.sample(rng) as i64 - 1
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Symmetric aperiodic finite-range jump distribution on Z^d.
#[derive(Clone, Debug)]
pub struct JumpDist {
    d: usize,
    atoms: Vec<(Site, f64)>,
    alias: AliasTable,
    range: i32,
}

impl JumpDist {
    /// Validates and builds. Requires: probabilities sum to one, pairwise
    /// symmetry θ(x) = θ(-x), θ(0) > 0 (aperiodicity), and a support that
    /// generates Z^d.
    pub fn new(d: usize, atoms: Vec<(Site, f64)>) -> Result<JumpDist> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::precondition(format!("dimension {d} out of range")));
        }
        if atoms.is_empty() {
            return Err(Error::precondition("jump distribution needs atoms"));
        }
        let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::precondition(format!(
                "jump probabilities sum to {total}, not 1"
            )));
        }
        for &(x, _) in &atoms {
            if x[d..].iter().any(|&c| c != 0) {
                return Err(Error::precondition(
                    "jump vector has nonzero coordinate beyond dimension d",
                ));
            }
        }
        // pairwise symmetry
        for &(x, p) in &atoms {
            let neg = negate(x);
            let q = atoms
                .iter()
                .find(|&&(y, _)| y == neg)
                .map(|&(_, q)| q)
                .unwrap_or(0.0);
            if (p - q).abs() > 1e-12 {
                return Err(Error::precondition(
                    "jump distribution is not symmetric: θ(x) != θ(-x)",
                ));
            }
        }
        let zero_mass = atoms
            .iter()
            .find(|&&(x, _)| x == ORIGIN)
            .map(|&(_, p)| p)
            .unwrap_or(0.0);
        if zero_mass <= 0.0 {
            return Err(Error::precondition(
                "jump distribution must be aperiodic (θ(0) > 0 required)",
            ));
        }
        let range = atoms
            .iter()
            .map(|&(x, _)| (0..d).map(|i| (x[i] as i32).abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        if range == 0 {
            return Err(Error::precondition("jump support must span Z^d"));
        }
        if !generates_lattice(d, &atoms, range) {
            return Err(Error::precondition("jump support does not generate Z^d"));
        }
        let weights: Vec<f64> = atoms.iter().map(|&(_, p)| p).collect();
        let alias = AliasTable::new(&weights);
        Ok(JumpDist {
            d,
            atoms,
            alias,
            range,
        })
    }

    /// Lazy simple random walk: θ(0) = 1/2, θ(±e_i) = 1/(4d).
    pub fn lazy_srw(d: usize) -> JumpDist {
        let mut atoms = vec![(ORIGIN, 0.5)];
        for i in 0..d {
            let mut plus = ORIGIN;
            plus[i] = 1;
            let mut minus = ORIGIN;
            minus[i] = -1;
            atoms.push((plus, 0.25 / d as f64));
            atoms.push((minus, 0.25 / d as f64));
        }
        JumpDist::new(d, atoms).expect("lazy walk preset is valid")
    }

    pub fn preset(name: &str, d: usize) -> Result<JumpDist> {
        match name {
            "lazy" | "lazy-srw" => Ok(JumpDist::lazy_srw(d)),
            other => Err(Error::config(format!("unknown jump preset '{other}'"))),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[(Site, f64)] {
        &self.atoms
    }

    /// Largest sup-norm of a support vector.
    pub fn range(&self) -> i32 {
        self.range
    }

    /// Covariance matrix Q of one step.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0; self.d]; self.d];
        for &(x, p) in &self.atoms {
            for i in 0..self.d {
                for j in 0..self.d {
                    q[i][j] += p * x[i] as f64 * x[j] as f64;
                }
            }
        }
        q
    }

    #[inline]
    pub fn sample_jump(&self, rng: &mut Rng) -> Site {
        self.atoms[self.alias.sample(rng)].0
    }
}

fn negate(x: Site) -> Site {
    let mut out = ORIGIN;
    for i in 0..MAX_DIM {
        out[i] = -x[i];
    }
    out
}

// BFS over a box: with a symmetric generating set the reachable points form
// the generated subgroup intersected with the box, so finding every unit
// vector certifies that the support generates Z^d.
fn generates_lattice(d: usize, atoms: &[(Site, f64)], range: i32) -> bool {
    use std::collections::HashSet;
    let radius = 4 * range + 4;
    let mut seen: HashSet<Site> = HashSet::new();
    let mut queue = vec![ORIGIN];
    seen.insert(ORIGIN);
    while let Some(v) = queue.pop() {
        for &(s, p) in atoms {
            if p <= 0.0 {
                continue;
            }
            if let Some(w) = site_add(v, s) {
                if (0..d).all(|i| (w[i] as i32).abs() <= radius) && seen.insert(w) {
                    queue.push(w);
                }
            }
        }
    }
    (0..d).all(|i| {
        let mut e = ORIGIN;
        e[i] = 1;
        seen.contains(&e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_biased_geometric() {
        let mu = OffspringDist::geometric();
        let sb = mu.size_biased();
        assert!((sb[1] - 0.25).abs() < 1e-15);
        assert!((sb[2] - 0.25).abs() < 1e-15);
        assert!((sb[3] - 3.0 / 16.0).abs() < 1e-15);
        let total: f64 = sb.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn size_biased_triangular() {
        let mu = OffspringDist::triangular();
        let sb = mu.size_biased();
        assert!((sb[1] - 0.5).abs() < 1e-15);
        assert!((sb[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn size_biased_divide_by_k_recovers_mu() {
        for mu in [OffspringDist::geometric(), OffspringDist::triangular()] {
            let sb = mu.size_biased();
            for k in 1..=mu.kmax() {
                assert!((sb[k] / k as f64 - mu.p(k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lwalk_step_laws() {
        let geo = OffspringDist::geometric();
        let (min, probs) = geo.lwalk_step();
        assert_eq!(min, -1);
        assert!((probs[0] - 0.5).abs() < 1e-15); // µ₋₁(-1)
        assert!((probs[1] - 0.25).abs() < 1e-15); // µ₋₁(0)
        assert!((probs[2] - 0.125).abs() < 1e-15); // µ₋₁(1)

        let tri = OffspringDist::triangular();
        let (_, probs) = tri.lwalk_step();
        assert!((probs[0] - 0.25).abs() < 1e-15);
        assert!((probs[1] - 0.5).abs() < 1e-15);
        assert!((probs[2] - 0.25).abs() < 1e-15);

        // mean 0, variance σ²
        for mu in [OffspringDist::geometric(), OffspringDist::triangular()] {
            let (min, probs) = mu.lwalk_step();
            let mean: f64 = probs
                .iter()
                .enumerate()
                .map(|(i, &p)| (min + i as i64) as f64 * p)
                .sum();
            let var: f64 = probs
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let j = (min + i as i64) as f64;
                    j * j * p
                })
                .sum::<f64>()
                - mean * mean;
            assert!(mean.abs() < 1e-12);
            assert!((var - mu.sigma2()).abs() < 1e-9);
        }
    }

    #[test]
    fn geometric_is_critical_with_sigma2_two() {
        let mu = OffspringDist::geometric();
        let mean: f64 = mu.pmf().iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
        assert!((mean - 1.0).abs() < 1e-12);
        assert!((mu.sigma2() - 2.0).abs() < 1e-9);
        let total: f64 = mu.pmf().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_noncritical_and_bad_span() {
        assert!(OffspringDist::new(vec![0.3, 0.5, 0.2], "bad").is_err());
        // span 2: support {0, 2}, mean 1
        assert!(OffspringDist::new(vec![0.5, 0.0, 0.5], "span2").is_err());
        // degenerate
        assert!(OffspringDist::new(vec![0.0, 1.0], "delta1").is_err());
    }

    #[test]
    fn empirical_offspring_pmf_within_4_sigma() {
        let mu = OffspringDist::geometric();
        let mut rng = Rng::seed_from_u64(11);
        let n = 1_000_000u64;
        let mut counts = vec![0u64; mu.kmax() + 1];
        for _ in 0..n {
            counts[mu.sample_offspring(&mut rng) as usize] += 1;
        }
        for k in 0..=8 {
            let p = mu.p(k);
            let sd = (p * (1.0 - p) * n as f64).sqrt();
            let diff = (counts[k] as f64 - p * n as f64).abs();
            assert!(diff <= 4.0 * sd, "bin {k}: diff {diff} > 4σ {sd}");
        }
    }

    #[test]
    fn sample_mean_near_one() {
        for mu in [OffspringDist::geometric(), OffspringDist::triangular()] {
            let mut rng = Rng::seed_from_u64(5);
            let n = 1_000_000u64;
            let mut sum = 0u64;
            for _ in 0..n {
                sum += mu.sample_offspring(&mut rng) as u64;
            }
            let mean = sum as f64 / n as f64;
            let tol = 4.0 * mu.sigma2().sqrt() / 1e3;
            assert!((mean - 1.0).abs() <= tol, "mean {mean}");
        }
    }

    #[test]
    fn lazy_jump_accepted_degenerate_rejected() {
        let theta = JumpDist::lazy_srw(5);
        assert_eq!(theta.d(), 5);
        assert_eq!(theta.atoms().len(), 11);
        let q = theta.covariance();
        for i in 0..5 {
            assert!((q[i][i] - 0.1).abs() < 1e-15);
            for j in 0..5 {
                if i != j {
                    assert!(q[i][j].abs() < 1e-15);
                }
            }
        }
        // support {e_1} only: fails symmetry
        let mut e1 = ORIGIN;
        e1[0] = 1;
        assert!(JumpDist::new(2, vec![(e1, 1.0)]).is_err());
    }

    #[test]
    fn jump_sampling_mean_zero() {
        let theta = JumpDist::lazy_srw(5);
        let mut rng = Rng::seed_from_u64(3);
        let mut sums = [0i64; 5];
        let n = 200_000;
        for _ in 0..n {
            let s = theta.sample_jump(&mut rng);
            for i in 0..5 {
                sums[i] += s[i] as i64;
            }
        }
        for (i, &s) in sums.iter().enumerate() {
            // per-coordinate sd of the sum is sqrt(n * 0.1) ≈ 141
            assert!(s.abs() < 4 * 142, "coordinate {i} drifted: {s}");
        }
    }
}
