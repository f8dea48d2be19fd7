//! Exact lattice-distribution engine.
//!
//! Dynamic-programming convolutions of the walk-step law µ₋₁ yield the
//! closed-form probabilities every sampler in this crate is tested against:
//! first-passage laws, the conditioned-walk marginal, the leaf probability
//! of the k-th vertex, and the local-limit ratio around a prefixed vertex.

use crate::dist::OffspringDist;
use crate::error::{Error, Result};
use crate::tree::PlaneTree;
use std::sync::RwLock;

/// Entries below this threshold are pruned from table rows. Pruned mass is
/// ~1e-120 per row against acceptance tolerances of 1e-12 on quantities no
/// smaller than ~1e-9.
const PRUNE_EPS: f64 = 1e-120;

/// Default largest table index built by the CLI.
pub const DEFAULT_NMAX: usize = 5000;

#[derive(Clone, Debug)]
struct Row {
    lo: i64,
    p: Vec<f64>,
}

impl Row {
    #[inline]
    fn get(&self, x: i64) -> f64 {
        if x < self.lo {
            return 0.0;
        }
        let i = (x - self.lo) as usize;
        self.p.get(i).copied().unwrap_or(0.0)
    }

    fn hi(&self) -> i64 {
        self.lo + self.p.len() as i64 - 1
    }

    fn pruned(lo: i64, p: Vec<f64>) -> Row {
        let first = p.iter().position(|&x| x >= PRUNE_EPS).unwrap_or(0);
        let last = p.iter().rposition(|&x| x >= PRUNE_EPS).unwrap_or(p.len() - 1);
        Row {
            lo: lo + first as i64,
            p: p[first..=last].to_vec(),
        }
    }
}

struct Inner {
    /// step[n] = law of L(n)
    step: Vec<Row>,
    /// bridge[m] = G(m, ·) = P[L(m) = h; L(i) ≥ 0 for i ≤ m]
    bridge: Vec<Row>,
}

/// Exact tables for one offspring distribution. Rows are built lazily and
/// grow monotonically; reads are concurrent, builds take the write lock.
pub struct Exact {
    mu: OffspringDist,
    inner: RwLock<Inner>,
}

impl Exact {
    pub fn new(mu: OffspringDist) -> Exact {
        let row0 = Row { lo: 0, p: vec![1.0] };
        Exact {
            mu,
            inner: RwLock::new(Inner {
                step: vec![row0.clone()],
                bridge: vec![row0],
            }),
        }
    }

    pub fn mu(&self) -> &OffspringDist {
        &self.mu
    }

    fn ensure_step(&self, n: usize) {
        if self.inner.read().unwrap().step.len() > n {
            return;
        }
        let mut inner = self.inner.write().unwrap();
        let pmf = self.mu.pmf();
        while inner.step.len() <= n {
            let prev = inner.step.last().unwrap();
            let mut p = vec![0.0f64; prev.p.len() + pmf.len() - 1];
            for (j, &q) in prev.p.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                for (i, &w) in pmf.iter().enumerate() {
                    p[j + i] += q * w;
                }
            }
            let row = Row::pruned(prev.lo - 1, p);
            inner.step.push(row);
        }
    }

    fn ensure_bridge(&self, m: usize) {
        if self.inner.read().unwrap().bridge.len() > m {
            return;
        }
        let mut inner = self.inner.write().unwrap();
        let pmf = self.mu.pmf();
        while inner.bridge.len() <= m {
            let prev = inner.bridge.last().unwrap();
            // out[h] = Σ_i µ(i)·prev[h − i + 1], h ≥ 0
            let hi = prev.hi() + pmf.len() as i64 - 1;
            let mut p = vec![0.0f64; (hi + 1) as usize];
            for (j, &q) in prev.p.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                let h0 = prev.lo + j as i64; // current height
                for (i, &w) in pmf.iter().enumerate() {
                    let h = h0 + i as i64 - 1;
                    if h >= 0 {
                        p[h as usize] += q * w;
                    }
                }
            }
            let row = Row::pruned(0, p);
            inner.bridge.push(row);
        }
    }

    /// P(L(n) = x).
    pub fn step_prob(&self, n: usize, x: i64) -> f64 {
        self.ensure_step(n);
        self.inner.read().unwrap().step[n].get(x)
    }

    /// G(m, h) = P[L(m) = h; L(i) ≥ 0 for all i ≤ m].
    pub fn bridge_prob(&self, m: usize, h: i64) -> f64 {
        self.ensure_bridge(m);
        self.inner.read().unwrap().bridge[m].get(h)
    }

    /// Reachable window [lo, hi] of the bridge row `m`.
    pub fn bridge_window(&self, m: usize) -> (i64, i64) {
        self.ensure_bridge(m);
        let inner = self.inner.read().unwrap();
        (inner.bridge[m].lo, inner.bridge[m].hi())
    }

    /// Sum of the step row `n`; 1 up to pruning.
    pub fn step_row_sum(&self, n: usize) -> f64 {
        self.ensure_step(n);
        self.inner.read().unwrap().step[n].p.iter().sum()
    }

    /// P(H_{-m} = n): the walk first hits −m at time n. Equals the
    /// probability that m independent tree sizes sum to n.
    pub fn first_passage(&self, m: usize, n: usize) -> Result<f64> {
        if m < 1 || n < m {
            return Err(Error::precondition(format!(
                "first_passage needs 1 <= m <= n, got m={m} n={n}"
            )));
        }
        Ok(m as f64 / n as f64 * self.step_prob(n, -(m as i64)))
    }

    /// P(|T| = n) = (1/n)·P(L(n) = −1).
    pub fn tree_size_pmf(&self, n: usize) -> Result<f64> {
        if n < 1 {
            return Err(Error::precondition("tree size must be at least 1"));
        }
        self.first_passage(1, n)
    }

    // P(H_{-h} = m) extended to h = 0 (point mass at m = 0).
    fn fp_from(&self, h: i64, m: usize) -> f64 {
        debug_assert!(h >= 0);
        if h == 0 {
            return if m == 0 { 1.0 } else { 0.0 };
        }
        if m == 0 {
            return 0.0;
        }
        h as f64 / m as f64 * self.step_prob(m, -h)
    }

    /// P^n[L(m) = h]: marginal of the walk conditioned on first passage of
    /// −1 at time n, namely G(m,h)·P_h[H = n−m]/P[H = n].
    pub fn conditioned_marginal(&self, n: usize, m: usize, h: i64) -> Result<f64> {
        if !(1 <= m && m < n) {
            return Err(Error::precondition(format!(
                "conditioned_marginal needs 1 <= m < n, got m={m} n={n}"
            )));
        }
        if h < 0 {
            return Ok(0.0);
        }
        let denom = self.tree_size_pmf(n)?;
        Ok(self.bridge_prob(m, h) * self.fp_from(h + 1, n - m) / denom)
    }

    /// P(V_k in T^n is a leaf), exactly:
    /// µ(0)/P[H=n] · Σ_h G(k,h)·P(H_{-h} = n−k−1).
    pub fn leaf_probability(&self, n: usize, k: usize) -> Result<f64> {
        if n < 1 || k >= n {
            return Err(Error::precondition(format!(
                "leaf_probability needs 0 <= k < n, got k={k} n={n}"
            )));
        }
        let denom = self.tree_size_pmf(n)?;
        let (lo, hi) = self.bridge_window(k);
        let mut sum = 0.0;
        for h in lo.max(0)..=hi {
            let g = self.bridge_prob(k, h);
            if g == 0.0 {
                continue;
            }
            sum += g * self.fp_from(h, n - k - 1);
        }
        Ok(self.mu.p(0) * sum / denom)
    }

    /// The exact ratio P[H_l(T^n, V_m) = (t,v)] / P[H_l(𝔗, u_0) = (t,v)],
    /// with v given by its DFS index in t (that index is also the count of
    /// vertices before v).
    pub fn local_limit_ratio(
        &self,
        n: usize,
        m: usize,
        t: &PlaneTree,
        point: usize,
    ) -> Result<f64> {
        let l = t.height_of(point);
        let pmf = self.unrooted_limit_pmf(t, point, l)?;
        if pmf == 0.0 {
            return Err(Error::precondition(
                "pointed tree has zero probability under the unrooted limit",
            ));
        }
        let size = t.len();
        let a = point;
        if n < size || m < a || m - a + size > n {
            return Err(Error::precondition(format!(
                "local_limit_ratio out of range: n={n} m={m} |t|={size} a={a}"
            )));
        }
        let n1 = n - size + 1;
        let leaf = self.leaf_probability(n1, m - a)?;
        let ratio = self.tree_size_pmf(n1)? / self.tree_size_pmf(n)?;
        Ok(leaf / self.mu.p(0) * ratio)
    }

    /// P[H_l(𝔗, u_0) = (t, v)] = ∏_{w ∈ t} µ(d_o(w)); `point` must sit at
    /// height `l`.
    pub fn unrooted_limit_pmf(&self, t: &PlaneTree, point: usize, l: usize) -> Result<f64> {
        if point >= t.len() {
            return Err(Error::precondition("point outside tree"));
        }
        if t.height_of(point) != l {
            return Err(Error::precondition(format!(
                "height mismatch: point at height {}, expected {l}",
                t.height_of(point)
            )));
        }
        Ok(crate::tree::gw_weight(&self.mu, t))
    }
}

/// The local Gaussian density approximation p̄_n(x) of P(L(n) = x).
pub fn gaussian_density(n: usize, x: f64, sigma: f64) -> f64 {
    assert!(n >= 1);
    let nf = n as f64;
    1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma * nf.sqrt())
        * (-x * x / (2.0 * nf * sigma * sigma)).exp()
}

/// Catalan number C(n) as f64; exact through n = 36 in u128.
pub fn catalan(n: usize) -> f64 {
    assert!(n <= 36);
    let mut c: u128 = 1;
    for i in 0..n as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c as f64
}
