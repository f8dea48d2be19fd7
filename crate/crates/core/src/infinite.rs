//! Infinite one-spine random trees as lazily extensible truncations.
//!
//! A `SpinalTree` materializes an infinite tree down to a frontier vertex:
//! the path root → frontier is the spine, every vertex off that path
//! carries a complete finite bush. Shifts re-root inside the materialized
//! region and fail loudly at the frontier; extension is the caller's
//! explicit choice.
//!
//! For pattern-censusing at scale, bushes can instead be sampled in a
//! capped mode that marks any bush larger than the cap as opaque. Every
//! component containing an opaque bush necessarily exceeds the pattern
//! size bound, so events on bounded-size components stay exactly
//! evaluable.

use crate::dist::{AliasTable, OffspringDist};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tree::{PlaneTree, PointedTree};

/// Which generator produced the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpineKind {
    /// Conditioned-on-survival tree: special root reproducing by µ̃.
    Kesten,
    /// Root degree i with probability i·µ(i−1)/2, uniform spine child.
    Corner,
    /// Root degree i with probability µ(i−1), spine child last.
    Vertex,
}

/// Bush sampling policy.
#[derive(Clone, Copy, Debug)]
pub enum BushPolicy {
    /// Complete bushes; any draw exceeding `cap` vertices is re-drawn and
    /// counted, so the (small) bias is reported.
    Complete { cap: usize },
    /// Bushes larger than `cap` become opaque stubs marked "big".
    MarkBig { cap: usize },
}

/// Default bush cap for complete sampling.
pub const DEFAULT_BUSH_CAP: usize = 100_000;

#[derive(Clone, Debug)]
struct Node {
    parent: Option<u32>,
    children: Vec<u32>,
    big: bool,
}

/// Truncation of an infinite one-spine tree.
#[derive(Clone, Debug)]
pub struct SpinalTree {
    kind: SpineKind,
    nodes: Vec<Node>,
    root: usize,
    frontier: usize,
    /// number of bush draws that exceeded the completion cap and were
    /// re-drawn (bias diagnostic)
    pub bush_overflow: u64,
}

impl SpinalTree {
    pub fn kind(&self) -> SpineKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn frontier(&self) -> usize {
        self.frontier
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.nodes[v].parent.map(|p| p as usize)
    }

    pub fn children(&self, v: usize) -> &[u32] {
        &self.nodes[v].children
    }

    pub fn is_big(&self, v: usize) -> bool {
        self.nodes[v].big
    }

    /// Spine = path root → frontier, root first.
    pub fn spine(&self) -> Vec<usize> {
        let mut path = vec![self.frontier];
        let mut v = self.frontier;
        while let Some(p) = self.parent(v) {
            path.push(p);
            v = p;
        }
        path.reverse();
        debug_assert_eq!(path[0], self.root);
        path
    }

    /// Spine truncation height.
    pub fn height(&self) -> usize {
        self.spine().len() - 1
    }

    /// Membership in the vertex-shift domain: the root's last child lies
    /// on the spine.
    pub fn in_vertex_domain(&self) -> bool {
        let spine = self.spine();
        if spine.len() < 2 {
            return false;
        }
        self.nodes[self.root]
            .children
            .last()
            .is_some_and(|&c| c as usize == spine[1])
    }

    /// Vertices of the subtree rooted at `v`, plane DFS order.
    fn subtree_vertices(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            out.push(x);
            for &c in self.nodes[x].children.iter().rev() {
                stack.push(c as usize);
            }
        }
        out
    }

    /// Root-DFS order over all materialized vertices.
    fn dfs_order(&self) -> Vec<usize> {
        self.subtree_vertices(self.root)
    }

    /// Canonical structural encoding: per vertex in root-DFS order, its
    /// out-degree, or −1 for the frontier, or −2 for an opaque bush stub.
    pub fn canonical_structure(&self) -> Vec<i64> {
        self.dfs_order()
            .iter()
            .map(|&v| {
                if v == self.frontier {
                    -1
                } else if self.nodes[v].big {
                    -2
                } else {
                    self.nodes[v].children.len() as i64
                }
            })
            .collect()
    }

    /// Canonical text serialization: spine length, then per spine vertex
    /// its sibling layout, then the bush out-degree sequences.
    pub fn to_lines(&self) -> String {
        use std::fmt::Write;
        let spine = self.spine();
        let mut s = String::new();
        writeln!(s, "spine {}", spine.len() - 1).unwrap();
        for (i, &v) in spine.iter().enumerate() {
            let kids = &self.nodes[v].children;
            if i + 1 < spine.len() {
                let pos = kids
                    .iter()
                    .position(|&c| c as usize == spine[i + 1])
                    .expect("spine child present");
                writeln!(s, "v {} {}", kids.len(), pos).unwrap();
            } else {
                writeln!(s, "v - -").unwrap();
            }
            for (j, &c) in kids.iter().enumerate() {
                if i + 1 < spine.len() && c as usize == spine[i + 1] {
                    continue;
                }
                let mut line = format!("b {j}");
                for w in self.subtree_vertices(c as usize) {
                    if self.nodes[w].big {
                        line.push_str(" !");
                    } else {
                        line.push_str(&format!(" {}", self.nodes[w].children.len()));
                    }
                }
                writeln!(s, "{line}").unwrap();
            }
        }
        s
    }

    fn add_node(&mut self, parent: Option<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            parent: parent.map(|p| p as u32),
            children: Vec::new(),
            big: false,
        });
        if let Some(p) = parent {
            self.nodes[p].children.push(id as u32);
        }
        id
    }

    // Grows a complete GW bush below `parent`; honors the policy.
    fn grow_bush(&mut self, parent: usize, mu: &OffspringDist, policy: BushPolicy, rng: &mut Rng) {
        let cap = match policy {
            BushPolicy::Complete { cap } | BushPolicy::MarkBig { cap } => cap,
        };
        loop {
            let mark = self.nodes.len();
            let root = self.add_node(Some(parent));
            let mut stack = vec![root];
            let mut count = 1usize;
            let mut overflow = false;
            while let Some(v) = stack.pop() {
                let d = mu.sample_offspring(rng) as usize;
                count += d;
                if count > cap {
                    overflow = true;
                    break;
                }
                for _ in 0..d {
                    let c = self.add_node(Some(v));
                    stack.push(c);
                }
            }
            if !overflow {
                return;
            }
            match policy {
                BushPolicy::Complete { .. } => {
                    // drop the partial bush and re-draw
                    self.nodes.truncate(mark);
                    self.nodes[parent].children.pop();
                    self.bush_overflow += 1;
                }
                BushPolicy::MarkBig { .. } => {
                    self.nodes.truncate(mark + 1);
                    self.nodes[root].children.clear();
                    self.nodes[root].big = true;
                    return;
                }
            }
        }
    }

    // One reproduction step of a special (spine) vertex: size-biased count,
    // uniform spine position, bushes elsewhere. Returns the new spine child.
    fn grow_spine_level(
        &mut self,
        v: usize,
        mu: &OffspringDist,
        policy: BushPolicy,
        rng: &mut Rng,
    ) -> usize {
        let k = mu.sample_size_biased(rng) as usize;
        let special = rng.below_usize(k);
        let mut spine_child = usize::MAX;
        for j in 0..k {
            if j == special {
                spine_child = self.add_node(Some(v));
            } else {
                self.grow_bush(v, mu, policy, rng);
            }
        }
        spine_child
    }

    /// Extends the spine by `extra` levels below the current frontier.
    pub fn extend(&mut self, extra: usize, mu: &OffspringDist, policy: BushPolicy, rng: &mut Rng) {
        for _ in 0..extra {
            let f = self.frontier;
            self.frontier = self.grow_spine_level(f, mu, policy, rng);
        }
    }

    /// Generic re-rooting at vertex `w`, choosing the corner so that
    /// `last_neighbor` (a neighbor of `w`) becomes its last child. Cyclic
    /// orders around every vertex are preserved.
    fn re_root(&mut self, w: usize, last_neighbor: usize) {
        if w == self.root {
            return;
        }
        // path w = p_0, p_1, ..., p_r = root
        let mut path = vec![w];
        let mut v = w;
        while let Some(p) = self.parent(v) {
            path.push(p);
            v = p;
        }
        let r = path.len() - 1;
        let old_children: Vec<Vec<u32>> =
            path.iter().map(|&p| self.nodes[p].children.clone()).collect();
        for t in 0..=r {
            let v = path[t];
            let new_kids: Vec<u32> = if t == 0 {
                // cyclic order around w: [parent, c_1..c_k]
                let kids = &old_children[0];
                let parent = path[1] as u32;
                if last_neighbor == path[1] {
                    kids.iter().copied().chain([parent]).collect()
                } else {
                    let q = kids
                        .iter()
                        .position(|&c| c as usize == last_neighbor)
                        .expect("last_neighbor must be adjacent to w");
                    kids[q + 1..]
                        .iter()
                        .copied()
                        .chain([parent])
                        .chain(kids[..=q].iter().copied())
                        .collect()
                }
            } else if t < r {
                let kids = &old_children[t];
                let i = kids
                    .iter()
                    .position(|&c| c as usize == path[t - 1])
                    .expect("path child");
                kids[i + 1..]
                    .iter()
                    .copied()
                    .chain([path[t + 1] as u32])
                    .chain(kids[..i].iter().copied())
                    .collect()
            } else {
                let kids = &old_children[r];
                let i = kids
                    .iter()
                    .position(|&c| c as usize == path[r - 1])
                    .expect("path child");
                kids[i + 1..]
                    .iter()
                    .copied()
                    .chain(kids[..i].iter().copied())
                    .collect()
            };
            self.nodes[v].children = new_kids;
        }
        // parent pointers: reverse along the path, fix re-inserted edges
        self.nodes[w].parent = None;
        for t in 1..=r {
            self.nodes[path[t]].parent = Some(path[t - 1] as u32);
        }
        self.root = w;
    }
}

fn new_arena(kind: SpineKind) -> SpinalTree {
    SpinalTree {
        kind,
        nodes: vec![Node {
            parent: None,
            children: Vec::new(),
            big: false,
        }],
        root: 0,
        frontier: 0,
        bush_overflow: 0,
    }
}

fn generate(
    mu: &OffspringDist,
    kind: SpineKind,
    h: usize,
    policy: BushPolicy,
    rng: &mut Rng,
) -> SpinalTree {
    assert!(h >= 1, "spine height must be at least 1");
    let mut st = new_arena(kind);
    // root reproduction
    let (k, special) = match kind {
        SpineKind::Kesten => {
            let k = mu.sample_size_biased(rng) as usize;
            (k, rng.below_usize(k))
        }
        SpineKind::Corner => {
            // i children with probability i·µ(i−1)/2, i ≥ 1
            let weights: Vec<f64> = (1..=mu.kmax() + 1)
                .map(|i| i as f64 * mu.p(i - 1) / 2.0)
                .collect();
            let total: f64 = weights.iter().sum();
            debug_assert!((total - 1.0).abs() < 1e-12, "corner root law sums to {total}");
            let k = AliasTable::new(&weights).sample(rng) + 1;
            (k, rng.below_usize(k))
        }
        SpineKind::Vertex => {
            let k = mu.sample_offspring(rng) as usize + 1;
            (k, k - 1)
        }
    };
    let mut spine_child = usize::MAX;
    for j in 0..k {
        if j == special {
            spine_child = st.add_node(Some(0));
        } else {
            st.grow_bush(0, mu, policy, rng);
        }
    }
    st.frontier = spine_child;
    st.extend(h - 1, mu, policy, rng);
    st
}

/// Kesten's tree T^∞ truncated at spine height `h`.
pub fn gen_kesten(mu: &OffspringDist, h: usize, rng: &mut Rng, policy: BushPolicy) -> SpinalTree {
    generate(mu, SpineKind::Kesten, h, policy, rng)
}

/// The corner-stationary tree T^c truncated at spine height `h`.
pub fn gen_tc(mu: &OffspringDist, h: usize, rng: &mut Rng, policy: BushPolicy) -> SpinalTree {
    generate(mu, SpineKind::Corner, h, policy, rng)
}

/// The vertex-stationary tree T^v truncated at spine height `h`.
pub fn gen_tv(mu: &OffspringDist, h: usize, rng: &mut Rng, policy: BushPolicy) -> SpinalTree {
    generate(mu, SpineKind::Vertex, h, policy, rng)
}

/// Exact sampler for H_l of the unrooted limit tree: a semi-infinite
/// ancestor path u_0, u_1, …, with u_0 carrying a GW bush and each u_i
/// reproducing by µ̃ with u_{i−1} a uniform child. Returns the subtree
/// below u_l pointed at u_0, plus the bush-overflow redraw count.
pub fn gen_unrooted(
    mu: &OffspringDist,
    l: usize,
    rng: &mut Rng,
    cap: usize,
) -> (PointedTree, u64) {
    let mut overflow = 0u64;
    let mut bush = |rng: &mut Rng| -> Vec<u32> {
        loop {
            match crate::tree::sample_gw(mu, cap, rng) {
                crate::tree::GwSample::Tree(t) => return t.out_degrees().to_vec(),
                crate::tree::GwSample::Overflow => overflow += 1,
            }
        }
    };
    // out-degree sequence of the subtree at u_i, with the DFS index of u_0
    let mut seq = bush(rng);
    let mut point = 0usize;
    for _ in 0..l {
        let k = mu.sample_size_biased(rng) as usize;
        let pos = rng.below_usize(k);
        let mut next: Vec<u32> = vec![k as u32];
        let mut next_point = 0;
        for j in 0..k {
            if j == pos {
                next_point = next.len() + point;
                next.extend_from_slice(&seq);
            } else {
                next.extend_from_slice(&bush(rng));
            }
        }
        seq = next;
        point = next_point;
    }
    let tree = PlaneTree::from_out_degrees(seq).expect("generated sequence is a valid tree");
    (PointedTree::pointed(tree, point), overflow)
}

/// Errors specific to shifts on truncations.
fn out_of_truncation(op: &str) -> Error {
    Error::truncation(format!("{op}: target outside the materialized truncation"))
}

/// One corner shift: re-roots at the first child of the root, the old root
/// becoming that child's last child.
pub fn corner_shift_once(st: &mut SpinalTree) -> Result<()> {
    let root = st.root;
    let first = *st.nodes[root]
        .children
        .first()
        .ok_or_else(|| out_of_truncation("corner_shift"))? as usize;
    if st.nodes[first].big {
        return Err(out_of_truncation("corner_shift (opaque bush)"));
    }
    if first == st.frontier {
        return Err(out_of_truncation("corner_shift (frontier)"));
    }
    st.re_root(first, root);
    Ok(())
}

/// Inverse corner shift: the root becomes the first child of the old
/// root's last child.
pub fn corner_shift_back(st: &mut SpinalTree) -> Result<()> {
    let root = st.root;
    let last = *st.nodes[root]
        .children
        .last()
        .ok_or_else(|| out_of_truncation("corner_shift_back"))? as usize;
    if st.nodes[last].big {
        return Err(out_of_truncation("corner_shift_back (opaque bush)"));
    }
    if last == st.frontier {
        return Err(out_of_truncation("corner_shift_back (frontier)"));
    }
    let last_neighbor = st.nodes[last]
        .children
        .last()
        .map(|&c| c as usize)
        .unwrap_or(root);
    st.re_root(last, last_neighbor);
    Ok(())
}

/// τ_c^{(k)}: k-fold corner shift (negative k composes the inverse).
pub fn corner_shift(st: &mut SpinalTree, k: i64) -> Result<()> {
    for _ in 0..k.abs() {
        if k > 0 {
            corner_shift_once(st)?;
        } else {
            corner_shift_back(st)?;
        }
    }
    Ok(())
}

/// One vertex shift on a tree in the vertex domain: re-roots at the next
/// vertex in the depth-first-search-from-infinity order (equivalently the
/// first non-spine vertex in root DFS order), at the unique corner that
/// keeps the root's last child on the spine.
pub fn vertex_shift_once(st: &mut SpinalTree) -> Result<()> {
    if !st.in_vertex_domain() {
        return Err(Error::precondition(
            "vertex_shift: tree is not in the vertex-shift domain",
        ));
    }
    let idx = infinity_index(st);
    let target = idx
        .iter()
        .find(|&&(_, i)| i == 1)
        .map(|&(v, _)| v)
        .ok_or_else(|| out_of_truncation("vertex_shift"))?;
    shift_to_vertex(st, target)
}

/// Inverse vertex shift: re-roots at the previous vertex of the order.
pub fn vertex_shift_back(st: &mut SpinalTree) -> Result<()> {
    if !st.in_vertex_domain() {
        return Err(Error::precondition(
            "vertex_shift_back: tree is not in the vertex-shift domain",
        ));
    }
    let idx = infinity_index(st);
    let target = idx
        .iter()
        .find(|&&(_, i)| i == -1)
        .map(|&(v, _)| v)
        .ok_or_else(|| out_of_truncation("vertex_shift_back"))?;
    shift_to_vertex(st, target)
}

// Re-roots at `target` with the frontier-side neighbor last, which is the
// unique corner keeping the tree in the vertex domain.
fn shift_to_vertex(st: &mut SpinalTree, target: usize) -> Result<()> {
    if st.nodes[target].big {
        return Err(out_of_truncation("vertex_shift (opaque bush)"));
    }
    if target == st.frontier {
        return Err(out_of_truncation("vertex_shift (frontier)"));
    }
    let spine = st.spine();
    let last_neighbor = match spine.iter().position(|&v| v == target) {
        Some(i) => spine[i + 1],
        None => st.parent(target).expect("non-root target has a parent"),
    };
    st.re_root(target, last_neighbor);
    Ok(())
}

/// τ_v^{(k)}: k-fold vertex shift.
pub fn vertex_shift(st: &mut SpinalTree, k: i64) -> Result<()> {
    for _ in 0..k.abs() {
        if k > 0 {
            vertex_shift_once(st)?;
        } else {
            vertex_shift_back(st)?;
        }
    }
    Ok(())
}

/// The depth-first-search-from-infinity order on the materialized vertices
/// (the frontier is excluded: its offspring are unknown). Returns
/// (vertex, index) pairs with root ↦ 0, sorted by index.
///
/// Rule set: split vertices into A_1 (descendants of elder siblings of
/// spine vertices) and A_2 (the rest). All of A_1 comes after all of A_2,
/// ordered among themselves by root DFS. Inside A_2, the group of a spine
/// vertex s_i is s_i followed by the right-grafted subtree at s_i in DFS
/// order; groups of deeper spine vertices come first.
pub fn infinity_index(st: &SpinalTree) -> Vec<(usize, i64)> {
    let spine = st.spine();

    // group of s_i: s_i, then subtrees of children younger than s_{i+1}
    let group = |i: usize| -> Vec<usize> {
        let v = spine[i];
        let succ = spine[i + 1];
        let mut out = vec![v];
        let kids = &st.nodes[v].children;
        let p = kids.iter().position(|&c| c as usize == succ).unwrap();
        for &c in &kids[p + 1..] {
            out.extend(st.subtree_vertices(c as usize));
        }
        out
    };

    let mut order: Vec<usize> = Vec::new();
    for i in (1..spine.len() - 1).rev() {
        order.extend(group(i));
    }
    order.extend(group(0));

    // A_1 in root-DFS order: descendants of elder siblings of spine vertices
    let mut a1_member = vec![false; st.nodes.len()];
    for i in 0..spine.len() - 1 {
        let v = spine[i];
        let succ = spine[i + 1];
        let kids = &st.nodes[v].children;
        let p = kids.iter().position(|&c| c as usize == succ).unwrap();
        for &c in &kids[..p] {
            for w in st.subtree_vertices(c as usize) {
                a1_member[w] = true;
            }
        }
    }
    for v in st.dfs_order() {
        if a1_member[v] {
            order.push(v);
        }
    }

    let root_pos = order.iter().position(|&v| v == st.root).unwrap() as i64;
    let mut out: Vec<(usize, i64)> = order
        .into_iter()
        .enumerate()
        .filter(|&(_, v)| v != st.frontier)
        .map(|(p, v)| (v, p as i64 - root_pos))
        .collect();
    out.sort_by_key(|&(_, i)| i);
    out
}

/// Weight of the event "equal to the pattern up to its exit vertex":
/// (1/2 for the corner measure)·∏ µ(d(v)−1) over component vertices
/// excluding the exit, where d is the degree inside the pattern (the exit
/// stub contributes to its parent's degree).
pub fn component_weight(
    mu: &OffspringDist,
    comp: &PlaneTree,
    exit: usize,
    kind: SpineKind,
) -> Result<f64> {
    if exit == 0 || exit >= comp.len() {
        return Err(Error::precondition("exit must be a non-root vertex"));
    }
    if !comp.is_leaf(exit) {
        return Err(Error::precondition("exit must be a leaf of the pattern"));
    }
    let mut w = match kind {
        SpineKind::Corner => 0.5,
        SpineKind::Vertex => 1.0,
        SpineKind::Kesten => {
            return Err(Error::precondition(
                "component weights are defined for the corner and vertex measures",
            ))
        }
    };
    for v in 0..comp.len() {
        if v == exit {
            continue;
        }
        let degree = comp.out_degree(v) as usize + usize::from(v != 0);
        w *= mu.p(degree - 1);
    }
    Ok(w)
}

/// Pattern key: out-degree sequence of the component in DFS order with the
/// exit stub encoded as −1 (the stub counts as a child of its parent).
pub type PatternKey = Vec<i32>;

/// Builds the key of a (component, exit) pattern given as a plane tree
/// whose `exit` leaf is the stub.
pub fn pattern_key(comp: &PlaneTree, exit: usize) -> PatternKey {
    (0..comp.len())
        .map(|v| {
            if v == exit {
                -1
            } else {
                comp.out_degree(v) as i32
            }
        })
        .collect()
}

/// All patterns with component size (excluding the exit stub) ≤ `max_comp`
/// and weight ≥ `min_prob` under the given measure. For the vertex measure
/// only patterns whose exit path leaves the root through its last child are
/// admissible.
pub fn enumerate_patterns(
    mu: &OffspringDist,
    max_comp: usize,
    min_prob: f64,
    kind: SpineKind,
) -> Vec<(PatternKey, f64)> {
    let mut out = Vec::new();
    for n in 2..=max_comp + 1 {
        for t in crate::tree::enumerate_trees(n) {
            for exit in 1..n {
                if !t.is_leaf(exit) {
                    continue;
                }
                if kind == SpineKind::Vertex {
                    // path to the exit must start at the root's last child
                    let kids = t.children(0);
                    let first_on_path = t.tree_path(0, exit)[1];
                    if *kids.last().unwrap() as usize != first_on_path {
                        continue;
                    }
                }
                let w = component_weight(mu, &t, exit, kind).unwrap();
                if w >= min_prob {
                    out.push((pattern_key(&t, exit), w));
                }
            }
        }
    }
    out
}

/// Component of the root obtained by deleting the subtree at `exit`,
/// encoded as a pattern key. `None` when the component exceeds `max_comp`
/// vertices or touches an opaque bush (in which case no bounded pattern
/// can match).
pub fn component_key(st: &SpinalTree, exit: usize, max_comp: usize) -> Option<PatternKey> {
    let mut key = Vec::new();
    let mut count = 0usize;
    let mut stack = vec![st.root];
    while let Some(v) = stack.pop() {
        if v == exit {
            key.push(-1);
            continue;
        }
        if st.nodes[v].big || v == st.frontier {
            return None; // opaque or unexplored: component unbounded
        }
        count += 1;
        if count > max_comp {
            return None;
        }
        key.push(st.nodes[v].children.len() as i32);
        for &c in st.nodes[v].children.iter().rev() {
            stack.push(c as usize);
        }
    }
    Some(key)
}

/// All pattern keys matched by the truncation: one per spine exit whose
/// component stays within `max_comp`.
pub fn matched_patterns(st: &SpinalTree, max_comp: usize) -> Vec<PatternKey> {
    let spine = st.spine();
    let mut out = Vec::new();
    for &exit in spine.iter().skip(1) {
        match component_key(st, exit, max_comp) {
            Some(k) => out.push(k),
            // components grow along the spine: nothing deeper can match
            None => break,
        }
    }
    out
}

/// Census target of the vertex shift: the first non-spine vertex in root
/// DFS order. Extends the spine as needed so the target exists.
pub fn vertex_shift_census(
    st: &mut SpinalTree,
    mu: &OffspringDist,
    policy: BushPolicy,
    rng: &mut Rng,
) -> Result<()> {
    loop {
        // literal rule: descend the spine until a spine vertex's first
        // child is off the spine; that child is the next vertex
        let spine = st.spine();
        let mut found = None;
        for i in 0..spine.len() - 1 {
            let kids = &st.nodes[spine[i]].children;
            if let Some(&first) = kids.first() {
                if first as usize != spine[i + 1] {
                    found = Some(first as usize);
                    break;
                }
            }
        }
        match found {
            Some(w) => {
                if st.nodes[w].big {
                    return Err(out_of_truncation("vertex_shift (opaque bush)"));
                }
                let parent = st.parent(w).unwrap();
                st.re_root(w, parent);
                return Ok(());
            }
            None => st.extend(1, mu, policy, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi2_gof;

    fn geo() -> OffspringDist {
        OffspringDist::geometric()
    }

    const COMPLETE: BushPolicy = BushPolicy::Complete { cap: 10_000 };

    #[test]
    fn kesten_root_law_is_size_biased() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(21);
        let sb = mu.size_biased();
        let mut counts = vec![0u64; mu.kmax() + 1];
        for _ in 0..50_000 {
            let st = gen_kesten(&mu, 1, &mut rng, COMPLETE);
            counts[st.children(st.root()).len()] += 1;
        }
        let r = chi2_gof(&counts, &sb, 5.0);
        assert!(r.p_value > 0.001, "p = {}", r.p_value);
        // and differs detectably from the plain offspring law
        let r_plain = chi2_gof(&counts, mu.pmf(), 5.0);
        assert!(r_plain.p_value < 1e-6);
    }

    #[test]
    fn corner_root_law() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(22);
        let mut one = 0u64;
        let n = 40_000;
        for _ in 0..n {
            let st = gen_tc(&mu, 1, &mut rng, COMPLETE);
            if st.children(st.root()).len() == 1 {
                one += 1;
            }
        }
        // P(root degree 1) = 1·µ(0)/2 = 1/4
        let p = 0.25f64;
        let sd = (p * (1.0 - p) * n as f64).sqrt();
        assert!((one as f64 - p * n as f64).abs() < 4.0 * sd);
    }

    #[test]
    fn vertex_root_law_and_domain() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(23);
        let mut one = 0u64;
        let n = 40_000;
        for _ in 0..n {
            let st = gen_tv(&mu, 2, &mut rng, COMPLETE);
            assert!(st.in_vertex_domain());
            if st.children(st.root()).len() == 1 {
                one += 1;
            }
        }
        // P(root degree 1) = µ(0) = 1/2
        let p = 0.5f64;
        let sd = (p * (1.0 - p) * n as f64).sqrt();
        assert!((one as f64 - p * n as f64).abs() < 4.0 * sd);
    }

    #[test]
    fn corner_shift_structure_and_inverse() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(24);
        for _ in 0..2_000 {
            let st = gen_tc(&mu, 4, &mut rng, COMPLETE);
            let before = st.canonical_structure();
            let old_root = st.root();
            let first = st.children(old_root)[0] as usize;
            let mut shifted = st.clone();
            if corner_shift_once(&mut shifted).is_err() {
                continue; // first child is the frontier at tiny heights
            }
            // new root is the old first child, old root is its last child
            assert_eq!(shifted.root(), first);
            assert_eq!(
                *shifted.children(first).last().unwrap() as usize,
                old_root
            );
            corner_shift_back(&mut shifted).unwrap();
            assert_eq!(shifted.root(), old_root);
            assert_eq!(shifted.canonical_structure(), before);
        }
    }

    #[test]
    fn vertex_shift_inverse_identity() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(25);
        let mut done = 0;
        while done < 1_000 {
            let st = gen_tv(&mu, 5, &mut rng, COMPLETE);
            let before = st.canonical_structure();
            let root = st.root();
            let mut shifted = st.clone();
            if vertex_shift_once(&mut shifted).is_err() {
                continue;
            }
            assert!(shifted.in_vertex_domain());
            vertex_shift_back(&mut shifted).unwrap();
            assert_eq!(shifted.root(), root);
            assert_eq!(shifted.canonical_structure(), before);
            done += 1;
        }
    }

    // Golden hand-derived 7-vertex example of the order-from-infinity.
    //
    //   o: children [a, s1]; s1: children [b, s2, c]; s2: children [d, s3]
    //   (s3 is the frontier; a, b, c, d are leaf bushes)
    //
    // Order: s2, s1, c, o, a, b, d → indices −3..3 with o ↦ 0.
    fn golden_tree() -> SpinalTree {
        let mut st = new_arena(SpineKind::Vertex);
        let o = st.root;
        let a = st.add_node(Some(o));
        let s1 = st.add_node(Some(o));
        let b = st.add_node(Some(s1));
        let s2 = st.add_node(Some(s1));
        let c = st.add_node(Some(s1));
        let d = st.add_node(Some(s2));
        let s3 = st.add_node(Some(s2));
        st.frontier = s3;
        let _ = (a, b, c, d);
        st
    }

    #[test]
    fn golden_infinity_index() {
        let st = golden_tree();
        // ids: o=0 a=1 s1=2 b=3 s2=4 c=5 d=6 s3=7
        let idx: std::collections::HashMap<usize, i64> =
            infinity_index(&st).into_iter().collect();
        assert_eq!(idx[&4], -3); // s2
        assert_eq!(idx[&2], -2); // s1
        assert_eq!(idx[&5], -1); // c (right bush of s1)
        assert_eq!(idx[&0], 0); // o
        assert_eq!(idx[&1], 1); // a
        assert_eq!(idx[&3], 2); // b
        assert_eq!(idx[&6], 3); // d
        assert_eq!(idx.len(), 7); // frontier excluded
    }

    #[test]
    fn golden_vertex_shift_decrements() {
        let mut st = golden_tree();
        let before: std::collections::HashMap<usize, i64> =
            infinity_index(&st).into_iter().collect();
        vertex_shift_once(&mut st).unwrap();
        assert_eq!(st.root(), 1); // a, the first non-spine vertex
        let after: std::collections::HashMap<usize, i64> =
            infinity_index(&st).into_iter().collect();
        for (v, i) in after {
            assert_eq!(i, before[&v] - 1, "vertex {v}");
        }
    }

    #[test]
    fn vertex_shift_decrement_random_truncations() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(26);
        let mut done = 0;
        while done < 300 {
            let st = gen_tv(&mu, 4, &mut rng, COMPLETE);
            let before: std::collections::HashMap<usize, i64> =
                infinity_index(&st).into_iter().collect();
            let mut shifted = st.clone();
            if vertex_shift_once(&mut shifted).is_err() {
                continue;
            }
            let after = infinity_index(&shifted);
            for (v, i) in after {
                assert_eq!(i, before[&v] - 1);
            }
            done += 1;
        }
    }

    #[test]
    fn left_only_tree_has_positive_left_indices() {
        // spine with one elder (left) bush and no right bushes: every bush
        // vertex lands strictly after the root
        let mut st = new_arena(SpineKind::Vertex);
        let o = st.root;
        let a = st.add_node(Some(o));
        let a2 = st.add_node(Some(a));
        let s1 = st.add_node(Some(o));
        let s2 = st.add_node(Some(s1));
        st.frontier = s2;
        let _ = a2;
        let idx: std::collections::HashMap<usize, i64> =
            infinity_index(&st).into_iter().collect();
        assert!(idx[&a] > 0 && idx[&a2] > 0);
        assert_eq!(idx[&s1], -1);
    }

    #[test]
    fn component_weight_values() {
        let mu = geo();
        // single root with the spine exit: (1/2)·µ(0) = 1/4
        let t = PlaneTree::from_out_degrees(vec![1, 0]).unwrap();
        let w = component_weight(&mu, &t, 1, SpineKind::Corner).unwrap();
        assert!((w - 0.25).abs() < 1e-15);
        let wv = component_weight(&mu, &t, 1, SpineKind::Vertex).unwrap();
        assert!((wv - 0.5).abs() < 1e-15);
        // root [bush leaf, exit]: (1/2)·µ(1)·µ(0)
        let t2 = PlaneTree::from_out_degrees(vec![2, 0, 0]).unwrap();
        let w2 = component_weight(&mu, &t2, 2, SpineKind::Corner).unwrap();
        assert!((w2 - 0.5 * 0.25 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn component_weight_is_degree_multiset_invariant() {
        // same degree multiset, different rootings of one component
        let mu = geo();
        // path a—b—exit rooted at a, vs rooted at b (exit leaf kept)
        let t1 = PlaneTree::from_out_degrees(vec![1, 1, 0]).unwrap();
        let w1 = component_weight(&mu, &t1, 2, SpineKind::Vertex).unwrap();
        let t2 = PlaneTree::from_out_degrees(vec![2, 0, 0]).unwrap();
        let w2 = component_weight(&mu, &t2, 1, SpineKind::Vertex).unwrap();
        // degrees: {1, 2} in both (exit excluded)
        assert!((w1 - w2).abs() < 1e-15);
    }

    #[test]
    fn unrooted_l0_is_plain_gw() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(27);
        for _ in 0..100 {
            let (pt, _) = gen_unrooted(&mu, 0, &mut rng, 10_000);
            match pt {
                PointedTree::Pointed { point, .. } => assert_eq!(point, 0),
                PointedTree::Diamond => panic!(),
            }
        }
    }

    #[test]
    fn unrooted_small_pattern_matches_product_formula() {
        // P[H_1(𝔗,u_0) = (two-vertex path, pointed at child)] = µ(1)·µ(0)
        let mu = geo();
        let mut rng = Rng::seed_from_u64(28);
        let n = 60_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            let (pt, _) = gen_unrooted(&mu, 1, &mut rng, 10_000);
            if let PointedTree::Pointed { tree, point } = pt {
                if tree.out_degrees() == [1, 0] && point == 1 {
                    hits += 1;
                }
            }
        }
        let p = 0.25 * 0.5;
        let sd = (p * (1.0 - p) * n as f64).sqrt();
        assert!((hits as f64 - p * n as f64).abs() < 4.0 * sd);
    }

    #[test]
    fn pattern_enumeration_and_matching() {
        let mu = geo();
        let pats = enumerate_patterns(&mu, 6, 1e-4, SpineKind::Vertex);
        assert!(!pats.is_empty());
        // simplest pattern: root with one child that is the exit
        let simple = pattern_key(&PlaneTree::from_out_degrees(vec![1, 0]).unwrap(), 1);
        let p = pats.iter().find(|(k, _)| *k == simple).unwrap();
        assert!((p.1 - 0.5).abs() < 1e-15); // µ(0) = 1/2 under the vertex law

        // golden tree: component at s1 is o-[a, exit] → key [2, 0, -1]
        let st = golden_tree();
        let keys = matched_patterns(&st, 6);
        assert!(keys.contains(&vec![2, 0, -1]));
        // component at s2: o-[a, s1-[b, exit, c]] → key [2,0,3,0,-1,0]
        assert!(keys.contains(&vec![2, 0, 3, 0, -1, 0]));
    }

    #[test]
    fn census_mode_marks_big_bushes() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(29);
        let mut saw_big = false;
        for _ in 0..500 {
            let st = gen_tv(&mu, 3, &mut rng, BushPolicy::MarkBig { cap: 7 });
            if (0..st.len()).any(|v| st.is_big(v)) {
                saw_big = true;
            }
        }
        assert!(saw_big);
    }

    #[test]
    fn serialization_roundtrip_stability() {
        let mu = geo();
        let mut rng = Rng::seed_from_u64(30);
        let st = gen_tv(&mu, 3, &mut rng, COMPLETE);
        let a = st.to_lines();
        let b = st.clone().to_lines();
        assert_eq!(a, b);
        assert!(a.starts_with("spine 3\n"));
    }
}
