//! Site assignments: attach a lattice random walk to a finite tree.

use crate::dist::{site_add, site_linf, JumpDist, Site};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tree::PlaneTree;

/// A tree with lattice sites on its vertices.
#[derive(Clone, Debug)]
pub struct SpatialTree {
    pub tree: PlaneTree,
    pub sites: Vec<Site>,
    pub start_vertex: usize,
}

/// First-hit report of a site set, scanning vertices in DFS order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HitReport {
    pub hit: bool,
    /// DFS index (= vertex id) of the first hit, when any.
    pub vertex: usize,
}

/// Attaches a θ-walk to `tree` with independent increments along edges,
/// oriented outward from `start_vertex`. Symmetry of θ is a module
/// contract (it makes edge orientation irrelevant), enforced at
/// `JumpDist` construction.
pub fn attach_walk(
    tree: PlaneTree,
    theta: &JumpDist,
    start_vertex: usize,
    start_site: Site,
    rng: &mut Rng,
) -> Result<SpatialTree> {
    let n = tree.len();
    if start_vertex >= n {
        return Err(Error::precondition("start vertex outside tree"));
    }
    let mut sites = vec![Site::default(); n];
    if start_vertex == 0 {
        // fast path: parents precede children in DFS order
        sites[0] = start_site;
        for v in 1..n {
            let p = tree.parents()[v] as usize;
            let step = theta.sample_jump(rng);
            sites[v] = site_add(sites[p], step)
                .ok_or_else(|| Error::precondition("site coordinate overflow"))?;
        }
    } else {
        // orient edges outward from the start vertex
        let mut assigned = vec![false; n];
        sites[start_vertex] = start_site;
        assigned[start_vertex] = true;
        let mut stack = vec![start_vertex];
        while let Some(v) = stack.pop() {
            let mut neighbors: Vec<usize> =
                tree.children(v).iter().map(|&c| c as usize).collect();
            if let Some(p) = tree.parent(v) {
                neighbors.push(p);
            }
            for w in neighbors {
                if !assigned[w] {
                    let step = theta.sample_jump(rng);
                    sites[w] = site_add(sites[v], step)
                        .ok_or_else(|| Error::precondition("site coordinate overflow"))?;
                    assigned[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    Ok(SpatialTree {
        tree,
        sites,
        start_vertex,
    })
}

impl SpatialTree {
    /// The set of visited sites.
    pub fn range(&self) -> std::collections::HashSet<Site> {
        self.sites.iter().copied().collect()
    }

    /// First hit of `k` in DFS order; short-circuits.
    pub fn hits(&self, k: &[Site]) -> HitReport {
        for (v, s) in self.sites.iter().enumerate() {
            if k.contains(s) {
                return HitReport { hit: true, vertex: v };
            }
        }
        HitReport {
            hit: false,
            vertex: usize::MAX,
        }
    }
}

/// Monte Carlo estimate of sup_{0≤i<n} P[|X_i − x| > l] (sup-norm) for a
/// size-n tree-indexed walk, one value per entry of `ls`.
pub fn displacement_tail(
    mu: &crate::dist::OffspringDist,
    theta: &JumpDist,
    n: usize,
    ls: &[i32],
    samples: u64,
    rng: &mut Rng,
) -> Vec<f64> {
    let mut counts = vec![vec![0u64; n]; ls.len()];
    for _ in 0..samples {
        let t = crate::tree::sample_gw_conditioned(mu, n, rng);
        let st = attach_walk(t, theta, 0, Site::default(), rng).expect("desk-scale walk");
        for (v, &s) in st.sites.iter().enumerate() {
            let d = site_linf(s, Site::default());
            for (j, &l) in ls.iter().enumerate() {
                if d > l {
                    counts[j][v] += 1;
                }
            }
        }
    }
    counts
        .iter()
        .map(|per_vertex| {
            per_vertex.iter().copied().max().unwrap_or(0) as f64 / samples as f64
        })
        .collect()
}
