//! Finite plane trees in flat DFS encoding, the Lukasiewicz bijection, and
//! Galton-Watson samplers.
//!
//! The canonical representation of a tree is its out-degree sequence in
//! depth-first order. The walk with steps (out-degree − 1) then stays
//! nonnegative until it terminates at −1; tree size equals the walk's
//! first-passage time of −1, which is what makes exact size-conditioned
//! sampling a one-rotation affair.

use crate::dist::OffspringDist;
use crate::error::{Error, Result};
use crate::rng::Rng;
use rand_distr::Distribution;
use std::sync::OnceLock;

/// Rooted ordered tree, vertices indexed 0..n in DFS order.
#[derive(Debug)]
pub struct PlaneTree {
    out: Vec<u32>,
    parent: Vec<u32>, // parent[0] is a self-loop sentinel
    heights: OnceLock<Vec<u32>>,
    sizes: OnceLock<Vec<u32>>,
    csr: OnceLock<(Vec<u32>, Vec<u32>)>,
}

impl Clone for PlaneTree {
    fn clone(&self) -> Self {
        PlaneTree::from_out_degrees_unchecked(self.out.clone())
    }
}

impl PartialEq for PlaneTree {
    fn eq(&self, other: &Self) -> bool {
        self.out == other.out
    }
}
impl Eq for PlaneTree {}

impl std::hash::Hash for PlaneTree {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.out.hash(state);
    }
}

impl PlaneTree {
    /// Single-vertex tree.
    pub fn single() -> PlaneTree {
        PlaneTree::from_out_degrees_unchecked(vec![0])
    }

    /// Builds from an out-degree sequence, validating the Lukasiewicz
    /// property.
    pub fn from_out_degrees(out: Vec<u32>) -> Result<PlaneTree> {
        let n = out.len();
        if n == 0 {
            return Err(Error::precondition("empty out-degree sequence"));
        }
        let mut s: i64 = 0;
        for (i, &d) in out.iter().enumerate() {
            s += d as i64 - 1;
            if i + 1 < n && s < 0 {
                return Err(Error::precondition(
                    "walk hits -1 before the end: not a tree encoding",
                ));
            }
        }
        if s != -1 {
            return Err(Error::precondition("walk does not end at -1"));
        }
        Ok(PlaneTree::from_out_degrees_unchecked(out))
    }

    fn from_out_degrees_unchecked(out: Vec<u32>) -> PlaneTree {
        let n = out.len();
        let mut parent = vec![0u32; n];
        // stack of (vertex, remaining children)
        let mut stack: Vec<(u32, u32)> = Vec::new();
        for i in 0..n {
            if let Some(top) = stack.last_mut() {
                parent[i] = top.0;
                top.1 -= 1;
            }
            if out[i] > 0 {
                stack.push((i as u32, out[i]));
            } else {
                while let Some(&(_, rem)) = stack.last() {
                    if rem == 0 {
                        stack.pop();
                    } else {
                        break;
                    }
                }
            }
        }
        PlaneTree {
            out,
            parent,
            heights: OnceLock::new(),
            sizes: OnceLock::new(),
            csr: OnceLock::new(),
        }
    }

    /// Decodes a Lukasiewicz step sequence (steps ≥ −1 summing to −1 with
    /// the first-passage property) into a tree.
    pub fn decode(steps: &[i64]) -> Result<PlaneTree> {
        let mut out = Vec::with_capacity(steps.len());
        for &s in steps {
            if s < -1 {
                return Err(Error::precondition("step below -1"));
            }
            out.push((s + 1) as u32);
        }
        PlaneTree::from_out_degrees(out)
    }

    /// The Lukasiewicz step sequence (out-degree − 1 per vertex).
    pub fn encode(&self) -> Vec<i64> {
        self.out.iter().map(|&d| d as i64 - 1).collect()
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn out_degrees(&self) -> &[u32] {
        &self.out
    }

    #[inline]
    pub fn out_degree(&self, v: usize) -> u32 {
        self.out[v]
    }

    #[inline]
    pub fn is_leaf(&self, v: usize) -> bool {
        self.out[v] == 0
    }

    #[inline]
    pub fn parent(&self, v: usize) -> Option<usize> {
        if v == 0 {
            None
        } else {
            Some(self.parent[v] as usize)
        }
    }

    pub fn parents(&self) -> &[u32] {
        &self.parent
    }

    fn heights_vec(&self) -> &[u32] {
        self.heights.get_or_init(|| {
            let n = self.len();
            let mut h = vec![0u32; n];
            for i in 1..n {
                h[i] = h[self.parent[i] as usize] + 1;
            }
            h
        })
    }

    fn sizes_vec(&self) -> &[u32] {
        self.sizes.get_or_init(|| {
            let n = self.len();
            let mut s = vec![1u32; n];
            for i in (1..n).rev() {
                s[self.parent[i] as usize] += s[i];
            }
            s
        })
    }

    fn csr_vec(&self) -> &(Vec<u32>, Vec<u32>) {
        self.csr.get_or_init(|| {
            let n = self.len();
            let mut off = vec![0u32; n + 1];
            for i in 1..n {
                off[self.parent[i] as usize + 1] += 1;
            }
            for i in 0..n {
                off[i + 1] += off[i];
            }
            let mut next = off.clone();
            let mut child = vec![0u32; n.saturating_sub(1)];
            // DFS index order within each parent = birth order
            for i in 1..n {
                let p = self.parent[i] as usize;
                child[next[p] as usize] = i as u32;
                next[p] += 1;
            }
            (off, child)
        })
    }

    /// Children of `v` in plane order.
    pub fn children(&self, v: usize) -> &[u32] {
        let (off, child) = self.csr_vec();
        &child[off[v] as usize..off[v + 1] as usize]
    }

    /// Height (distance from the root) of `v`.
    pub fn height_of(&self, v: usize) -> usize {
        self.heights_vec()[v] as usize
    }

    /// Number of vertices in the subtree rooted at `v`.
    pub fn subtree_size(&self, v: usize) -> usize {
        self.sizes_vec()[v] as usize
    }

    /// The subtree rooted at `v` as its own tree. Subtrees are contiguous
    /// DFS index ranges, so this is a slice copy.
    pub fn subtree_at(&self, v: usize) -> PlaneTree {
        let s = self.subtree_size(v);
        PlaneTree::from_out_degrees_unchecked(self.out[v..v + s].to_vec())
    }

    /// Counts of vertices per generation.
    pub fn generation_profile(&self) -> Vec<u64> {
        let h = self.heights_vec();
        let max = h.iter().copied().max().unwrap_or(0) as usize;
        let mut w = vec![0u64; max + 1];
        for &x in h {
            w[x as usize] += 1;
        }
        w
    }

    /// Subtree generated by all vertices of height ≤ `i`, keeping plane
    /// order.
    pub fn truncate_to_height(&self, i: usize) -> PlaneTree {
        let h = self.heights_vec();
        let mut out = Vec::new();
        for v in 0..self.len() {
            let hv = h[v] as usize;
            if hv < i {
                let kept = self
                    .children(v)
                    .iter()
                    .filter(|&&c| (h[c as usize] as usize) <= i)
                    .count();
                out.push(kept as u32);
            } else if hv == i {
                out.push(0);
            }
        }
        PlaneTree::from_out_degrees_unchecked(out)
    }

    /// Lowest common ancestor.
    pub fn lca(&self, mut u: usize, mut v: usize) -> usize {
        let h = self.heights_vec();
        while h[u] > h[v] {
            u = self.parent[u] as usize;
        }
        while h[v] > h[u] {
            v = self.parent[v] as usize;
        }
        while u != v {
            u = self.parent[u] as usize;
            v = self.parent[v] as usize;
        }
        u
    }

    /// Vertices of the unique path from `u` to `v`, inclusive.
    pub fn tree_path(&self, u: usize, v: usize) -> Vec<usize> {
        let a = self.lca(u, v);
        let mut up = Vec::new();
        let mut x = u;
        while x != a {
            up.push(x);
            x = self.parent[x] as usize;
        }
        up.push(a);
        let mut down = Vec::new();
        let mut y = v;
        while y != a {
            down.push(y);
            y = self.parent[y] as usize;
        }
        up.extend(down.into_iter().rev());
        up
    }

    pub fn graph_distance(&self, u: usize, v: usize) -> usize {
        let h = self.heights_vec();
        let a = self.lca(u, v);
        (h[u] + h[v] - 2 * h[a]) as usize
    }

    /// `l`-th ancestor if it exists.
    pub fn ancestor(&self, v: usize, l: usize) -> Option<usize> {
        let mut x = v;
        for _ in 0..l {
            x = self.parent(x)?;
        }
        Some(x)
    }

    pub fn leaf_count(&self) -> usize {
        self.out.iter().filter(|&&d| d == 0).count()
    }
}

/// A tree pointed at one of its vertices, or the sentinel for "no such
/// subtree" (the pointed vertex has no `l`-th ancestor).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PointedTree {
    Pointed { tree: PlaneTree, point: usize },
    Diamond,
}

impl PointedTree {
    pub fn pointed(tree: PlaneTree, point: usize) -> PointedTree {
        assert!(point < tree.len());
        PointedTree::Pointed { tree, point }
    }
}

/// H_l: the subtree rooted at the `l`-th ancestor of `v`, pointed at `v`.
pub fn pointed_ancestor_subtree(t: &PlaneTree, v: usize, l: usize) -> PointedTree {
    match t.ancestor(v, l) {
        None => PointedTree::Diamond,
        Some(a) => {
            let sub = t.subtree_at(a);
            PointedTree::Pointed {
                tree: sub,
                point: v - a,
            }
        }
    }
}

/// M-vertices of `t` in the index window `[a, b]`: non-root vertices whose
/// whole subtree lies inside {V_a..V_b}, which are off the V_a–V_b tree
/// path while their parent is on it.
pub fn m_vertices(t: &PlaneTree, a: usize, b: usize) -> Vec<usize> {
    assert!(a <= b && b < t.len());
    let path = t.tree_path(a, b);
    let on_path: std::collections::HashSet<usize> = path.iter().copied().collect();
    let mut out = Vec::new();
    for &p in &path {
        for &c in t.children(p) {
            let c = c as usize;
            if c == 0 || on_path.contains(&c) {
                continue;
            }
            let s = t.subtree_size(c);
            if c >= a && c + s <= b + 1 {
                out.push(c);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Literal-definition reference scan for `m_vertices`; quadratic, used as
/// a test oracle.
pub fn m_vertices_reference(t: &PlaneTree, a: usize, b: usize) -> Vec<usize> {
    let path = t.tree_path(a, b);
    let on_path: std::collections::HashSet<usize> = path.into_iter().collect();
    let mut out = Vec::new();
    for v in 1..t.len() {
        if on_path.contains(&v) {
            continue;
        }
        let p = t.parent(v).unwrap();
        if !on_path.contains(&p) {
            continue;
        }
        let s = t.subtree_size(v);
        if (v..v + s).all(|w| w >= a && w <= b) {
            out.push(v);
        }
    }
    out
}

/// Outcome of unconditioned sampling with a size cap.
#[derive(Debug)]
pub enum GwSample {
    Tree(PlaneTree),
    /// The tree exceeded the cap; the overflow is a value, not an error.
    Overflow,
}

/// Unconditioned Galton-Watson tree; `Overflow` if the size passes `cap`.
pub fn sample_gw(mu: &OffspringDist, cap: usize, rng: &mut Rng) -> GwSample {
    let mut out: Vec<u32> = Vec::new();
    let mut open: i64 = 1;
    while open > 0 {
        if out.len() >= cap {
            return GwSample::Overflow;
        }
        let d = mu.sample_offspring(rng);
        out.push(d);
        open += d as i64 - 1;
    }
    GwSample::Tree(PlaneTree::from_out_degrees_unchecked(out))
}

/// Unique cyclic shift of a step sequence with sum −1 whose walk first hits
/// −1 at the end: rotate to start just after the first prefix-sum minimum.
pub fn vervaat_rotation(steps: &mut Vec<i64>) {
    let n = steps.len();
    let mut s: i64 = 0;
    let mut min = i64::MAX;
    let mut argmin = 0usize;
    for (i, &x) in steps.iter().enumerate() {
        s += x;
        if s < min {
            min = s;
            argmin = i;
        }
    }
    debug_assert_eq!(s, -1);
    steps.rotate_left((argmin + 1) % n);
}

// Below this size, plain step-rejection beats the counts method.
const COUNTS_THRESHOLD: usize = 128;

/// Exact sampler for the Galton-Watson tree conditioned on size `n`:
/// draw n i.i.d. µ₋₁ steps conditioned on their sum being −1 (rejection on
/// the sum), rotate per the cycle lemma, decode.
///
/// The conditional step multiset is drawn through sequential binomial
/// counts for large n, which turns each rejection round into O(kmax) work
/// instead of O(n); a uniform shuffle of the accepted multiset restores
/// the conditional i.i.d. law exactly.
pub fn sample_gw_conditioned(mu: &OffspringDist, n: usize, rng: &mut Rng) -> PlaneTree {
    let budget = 10_000 + 4_000 * (mu.sigma2().sqrt() * (n as f64).sqrt()) as u64;
    sample_gw_conditioned_with(mu, n, rng, budget).expect("rejection budget exhausted")
}

/// As [`sample_gw_conditioned`] with an explicit bound on rejection rounds.
pub fn sample_gw_conditioned_with(
    mu: &OffspringDist,
    n: usize,
    rng: &mut Rng,
    max_attempts: u64,
) -> Result<PlaneTree> {
    if n == 0 {
        return Err(Error::precondition("tree size must be at least 1"));
    }
    let pmf = mu.pmf();
    let mut steps: Vec<i64> = Vec::with_capacity(n);
    if n < COUNTS_THRESHOLD {
        for _ in 0..max_attempts {
            steps.clear();
            let mut sum: i64 = 0;
            for _ in 0..n {
                let s = mu.sample_lwalk_step(rng);
                steps.push(s);
                sum += s;
            }
            if sum == -1 {
                vervaat_rotation(&mut steps);
                return PlaneTree::decode(&steps);
            }
        }
    } else {
        let mut counts = vec![0u64; pmf.len()];
        'attempt: for _ in 0..max_attempts {
            // sequential-binomial multinomial draw of step-type counts
            let mut remaining = n as u64;
            let mut rem_p = 1.0f64;
            let mut sum: i64 = 0;
            for k in 0..pmf.len() {
                let c = if k + 1 == pmf.len() {
                    remaining
                } else if remaining == 0 || pmf[k] <= 0.0 {
                    0
                } else {
                    let p = (pmf[k] / rem_p).clamp(0.0, 1.0);
                    rand_distr::Binomial::new(remaining, p)
                        .expect("valid binomial")
                        .sample(rng)
                };
                counts[k] = c;
                remaining -= c;
                rem_p -= pmf[k];
                sum += c as i64 * (k as i64 - 1);
            }
            if pmf[pmf.len() - 1] <= 0.0 && counts[pmf.len() - 1] > 0 {
                continue 'attempt; // zero-probability overflow slot
            }
            if sum != -1 {
                continue 'attempt;
            }
            // materialize the multiset and shuffle it uniformly
            steps.clear();
            for (k, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    steps.push(k as i64 - 1);
                }
            }
            for i in (1..n).rev() {
                steps.swap(i, rng.below_usize(i + 1));
            }
            vervaat_rotation(&mut steps);
            return PlaneTree::decode(&steps);
        }
    }
    Err(Error::truncation(format!(
        "conditioned sampler: no sum −1 draw in {max_attempts} attempts (n = {n})"
    )))
}

/// Weight ∏ µ(out-degree) of a fixed tree; the unnormalized GW law.
pub fn gw_weight(mu: &OffspringDist, t: &PlaneTree) -> f64 {
    t.out_degrees().iter().map(|&d| mu.p(d as usize)).product()
}

/// All plane trees of size `n` (out-degrees unbounded up to n−1).
/// Exhaustive oracle; capped at size 14.
pub fn enumerate_trees(n: usize) -> Vec<PlaneTree> {
    assert!(n >= 1 && n <= 14, "enumeration oracle capped at size 14");
    let mut out = Vec::new();
    let mut prefix: Vec<u32> = Vec::with_capacity(n);
    fn rec(n: usize, s: i64, prefix: &mut Vec<u32>, out: &mut Vec<PlaneTree>) {
        let i = prefix.len();
        if i == n {
            out.push(PlaneTree::from_out_degrees_unchecked(prefix.clone()));
            return;
        }
        let r_after = (n - i - 1) as i64;
        // after choosing d: s' = s + d − 1 must satisfy s' ∈ [0, r'−1] if
        // vertices remain, s' = −1 at the end
        for d in 0..=(n - i) as i64 {
            let s2 = s + d - 1;
            let ok = if r_after == 0 { s2 == -1 } else { s2 >= 0 && s2 <= r_after - 1 };
            if ok {
                prefix.push(d as u32);
                rec(n, s2, prefix, out);
                prefix.pop();
            }
        }
    }
    rec(n, 0, &mut prefix, &mut out);
    out
}

/// All pointed trees (t, v) with |t| ≤ `max_size`.
pub fn enumerate_pointed_trees(max_size: usize) -> Vec<(PlaneTree, usize)> {
    let mut out = Vec::new();
    for n in 1..=max_size {
        for t in enumerate_trees(n) {
            for v in 0..n {
                out.push((t.clone(), v));
            }
        }
    }
    out
}

/// Empirical comparison data behind the record-time identity: the height of
/// the N-th vertex of a GW forest has the law of the number of record times
/// of the step walk, and the first record height has mean σ²/2.
pub struct RecordHeightReport {
    /// histogram of the height of the N-th forest vertex
    pub forest_heights: Vec<u64>,
    /// histogram of #{j : R_j ≤ N} for an independent walk
    pub record_counts: Vec<u64>,
    /// sample mean of L(R_1) (conditional on R_1 within the step budget)
    pub first_record_mean: crate::estimate::Estimate,
    /// walks whose first record did not occur within the budget
    pub first_record_truncated: u64,
}

/// Samples both sides of the record-time identity.
pub fn record_height_check(
    mu: &OffspringDist,
    n_index: usize,
    samples: u64,
    rng: &mut Rng,
) -> RecordHeightReport {
    assert!(n_index >= 1);
    let mut forest = vec![0u64; 8];
    let mut records = vec![0u64; 8];
    let mut first_record = crate::estimate::Estimate::new();
    let mut truncated = 0u64;
    for _ in 0..samples {
        // forest side: height of the (n_index)-th vertex, built directly
        // from the forest walk via a stack of open vertices
        let mut stack: Vec<u32> = Vec::new();
        let mut height = 0usize;
        for _ in 0..n_index {
            height = stack.len();
            if let Some(top) = stack.last_mut() {
                *top -= 1;
            }
            let d = mu.sample_offspring(rng);
            if d > 0 {
                stack.push(d);
            } else {
                while stack.last() == Some(&0) {
                    stack.pop();
                }
            }
        }
        if forest.len() <= height {
            forest.resize(height + 1, 0);
        }
        forest[height] += 1;

        // record side: weak-maximum record epochs of an independent walk on
        // [[1, N−1]], matching the 1-based "N-th vertex" above
        let mut l: i64 = 0;
        let mut max: i64 = 0;
        let mut count = 0usize;
        for _ in 1..n_index {
            l += mu.sample_lwalk_step(rng);
            if l >= max {
                max = l;
                count += 1;
            }
        }
        if records.len() <= count {
            records.resize(count + 1, 0);
        }
        records[count] += 1;

        // first record height on a fresh walk
        let mut l: i64 = 0;
        let mut done = false;
        for _ in 0..1_000_000u64 {
            l += mu.sample_lwalk_step(rng);
            if l >= 0 {
                first_record.push(l as f64);
                done = true;
                break;
            }
        }
        if !done {
            truncated += 1;
        }
    }
    let len = forest.len().max(records.len());
    forest.resize(len, 0);
    records.resize(len, 0);
    RecordHeightReport {
        forest_heights: forest,
        record_counts: records,
        first_record_mean: first_record,
        first_record_truncated: truncated,
    }
}
