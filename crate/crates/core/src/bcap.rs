//! Branching capacity and the local interlacement law.
//!
//! The estimators sample doubly-infinite tree trajectories rooted at a
//! point of K: a descending special spine with complete bushes on both
//! sides. Vertices before the root in the order-from-infinity (the spine
//! below the root and everything grafted on its right) form the past; the
//! escape probability Es_K(x) is the chance that no past vertex lands in
//! K.
//!
//! Infinite objects are explored inside the ball B(K, r_stop): subtrees
//! rooted outside it are pruned and charged to a residual bound built from
//! two fitted hitting profiles (the trajectory tail decays like r^{4−d},
//! a single bush like r^{2−d}). Pruning can only hide hits, so the
//! estimate is one-sided: Es lies within [value − residual, value].

use crate::dist::{site_add, site_linf, JumpDist, OffspringDist, Site, ORIGIN};
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::rng::Rng;

/// A finite target set: an explicit point list or a centered sup-norm box.
#[derive(Clone, Debug)]
pub enum Region {
    Points(Vec<Site>),
    Box { d: usize, radius: i32 },
}

impl Region {
    pub fn contains(&self, s: Site) -> bool {
        match self {
            Region::Points(pts) => pts.contains(&s),
            Region::Box { d, radius } => (0..*d).all(|i| (s[i] as i32).abs() <= *radius),
        }
    }

    /// sup-norm distance from `s` to the region (0 inside).
    pub fn sup_dist(&self, s: Site) -> i32 {
        match self {
            Region::Points(pts) => pts.iter().map(|&p| site_linf(s, p)).min().unwrap_or(i32::MAX),
            Region::Box { d, radius } => (0..*d)
                .map(|i| ((s[i] as i32).abs() - radius).max(0))
                .max()
                .unwrap_or(0),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Region::Points(pts) => pts.len(),
            Region::Box { d, radius } => (2 * *radius as usize + 1).pow(*d as u32),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points of the region from which at least one θ-step leads outside;
    /// Es vanishes identically elsewhere, so capacity estimation sums over
    /// this shell only.
    pub fn escape_shell(&self, theta: &JumpDist) -> Vec<Site> {
        let can_exit = |s: Site| {
            theta
                .atoms()
                .iter()
                .any(|&(step, p)| p > 0.0 && site_add(s, step).is_none_or(|w| !self.contains(w)))
        };
        match self {
            Region::Points(pts) => pts.iter().copied().filter(|&s| can_exit(s)).collect(),
            Region::Box { d, radius } => {
                let mut out = Vec::new();
                let r = *radius;
                let mut cur = ORIGIN;
                fn rec(
                    i: usize,
                    d: usize,
                    r: i32,
                    cur: &mut Site,
                    out: &mut Vec<Site>,
                    can_exit: &dyn Fn(Site) -> bool,
                ) {
                    if i == d {
                        if can_exit(*cur) {
                            out.push(*cur);
                        }
                        return;
                    }
                    for c in -r..=r {
                        cur[i] = c as i16;
                        rec(i + 1, d, r, cur, out, can_exit);
                    }
                    cur[i] = 0;
                }
                rec(0, *d, r, &mut cur, &mut out, &can_exit);
                out
            }
        }
    }
}

/// Tuning for the trajectory estimators.
///
/// The default stop radius of 16 keeps the measured truncation bias of
/// Es({0}) near two percent while exploration cost grows like the fourth
/// power of the radius; widen it through `r_stop` when tighter bias
/// bounds are worth the time.
#[derive(Clone, Copy, Debug)]
pub struct EsParams {
    /// exploration ball radius around K
    pub r_stop: i32,
    /// Monte Carlo samples
    pub samples: u64,
    /// per-sample explored-vertex budget; exceeding it is a hard failure
    pub max_explored: u64,
    /// worker count for replica parallelism
    pub workers: usize,
    /// auxiliary samples for the tail profile fit
    pub aux_tail_samples: u64,
    /// auxiliary samples for the bush profile fit
    pub aux_bush_samples: u64,
}

impl Default for EsParams {
    fn default() -> Self {
        EsParams {
            r_stop: 16,
            samples: 20_000,
            max_explored: 100_000_000,
            workers: 1,
            aux_tail_samples: 400,
            aux_bush_samples: 400_000,
        }
    }
}

/// Fitted hitting profiles used for residual bounds.
#[derive(Clone, Copy, Debug)]
pub struct Profiles {
    /// bound on P[trajectory tail from the stop sphere ever hits K]
    pub q_tail: f64,
    /// bound on P[one unconditioned bush from the stop sphere hits K]
    pub q_bush: f64,
}

/// One escape-probability estimate with truncation diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct EsEstimate {
    /// fraction of samples whose explored past avoided K (upper-biased)
    pub value: f64,
    pub stderr: f64,
    /// one-sided bound on the unresolved hit mass: Es ≥ value − residual
    pub residual: f64,
    pub samples: u64,
    /// mean pruned subtrees per surviving sample
    pub mean_prunes: f64,
    /// mean explored vertices per sample
    pub mean_explored: f64,
    /// bushes that hit the per-bush exploration cap
    pub cap_events: u64,
}

/// Capacity estimate: per-point Es values (point regions) or an aggregate
/// shell estimate (boxes).
#[derive(Clone, Debug)]
pub struct CapEstimate {
    pub points: Option<Vec<(Site, EsEstimate)>>,
    pub bcap: f64,
    pub stderr: f64,
    pub residual: f64,
    pub r_stop: i32,
    pub samples: u64,
}

// --- trajectory simulation -------------------------------------------------

/// Per-bush explored-vertex cap. A capped bush charges its open frontier
/// to the residual bound instead of failing the run.
const BUSH_CAP: u64 = 2_000_000;

type ISite = [i32; crate::dist::MAX_DIM];

fn to_isite(s: Site) -> ISite {
    let mut out = [0i32; crate::dist::MAX_DIM];
    for i in 0..crate::dist::MAX_DIM {
        out[i] = s[i] as i32;
    }
    out
}

fn to_site(s: ISite) -> Site {
    let mut out = crate::dist::ORIGIN;
    for i in 0..crate::dist::MAX_DIM {
        out[i] = s[i] as i16; // estimators stay well inside i16 range
    }
    out
}

// Region compiled to i32 arithmetic with a fused membership/distance pass.
enum Compiled {
    Single(ISite),
    Points(Vec<ISite>),
    Box { d: usize, radius: i32 },
}

impl Compiled {
    fn new(region: &Region) -> Compiled {
        match region {
            Region::Points(pts) if pts.len() == 1 => Compiled::Single(to_isite(pts[0])),
            Region::Points(pts) => Compiled::Points(pts.iter().map(|&p| to_isite(p)).collect()),
            Region::Box { d, radius } => Compiled::Box {
                d: *d,
                radius: *radius,
            },
        }
    }

    /// (contains, sup-distance) in one pass.
    #[inline]
    fn classify(&self, s: &ISite) -> (bool, i32) {
        match self {
            Compiled::Single(p) => {
                let mut m = 0;
                for i in 0..crate::dist::MAX_DIM {
                    let d = (s[i] - p[i]).abs();
                    if d > m {
                        m = d;
                    }
                }
                (m == 0, m)
            }
            Compiled::Points(pts) => {
                let mut best = i32::MAX;
                for p in pts {
                    let mut m = 0;
                    for i in 0..crate::dist::MAX_DIM {
                        let d = (s[i] - p[i]).abs();
                        if d > m {
                            m = d;
                        }
                    }
                    if m < best {
                        best = m;
                    }
                }
                (best == 0, best)
            }
            Compiled::Box { d, radius } => {
                let mut m = 0;
                for i in 0..*d {
                    let e = s[i].abs() - radius;
                    if e > m {
                        m = e;
                    }
                }
                (m <= 0, m.max(0))
            }
        }
    }
}

struct Sim<'a> {
    mu: &'a OffspringDist,
    theta: &'a JumpDist,
    region: Compiled,
    r_stop: i32,
    max_explored: u64,
    explored: u64,
    prunes: u64,
    /// fitted single-bush hit probability at the fit radius (0 during the
    /// profile fit itself)
    q_bush: f64,
    /// unresolved hit probability charged for capped bush frontiers
    capped_prob: f64,
    cap_events: u64,
    budget_hit: bool,
    profile_r0: f64,
    stack: Vec<(ISite, u32)>,
}

enum BushOutcome {
    Hit,
    Clean,
}

impl<'a> Sim<'a> {
    fn new(
        mu: &'a OffspringDist,
        theta: &'a JumpDist,
        region: &Region,
        r_stop: i32,
        max_explored: u64,
        q_bush: f64,
    ) -> Self {
        Sim {
            mu,
            theta,
            region: Compiled::new(region),
            r_stop,
            max_explored,
            explored: 0,
            prunes: 0,
            q_bush,
            capped_prob: 0.0,
            cap_events: 0,
            budget_hit: false,
            profile_r0: (r_stop + 1) as f64,
            stack: Vec::with_capacity(256),
        }
    }

    #[inline]
    fn step(&self, from: &ISite, rng: &mut Rng) -> ISite {
        let j = self.theta.sample_jump(rng);
        let mut out = *from;
        for i in 0..crate::dist::MAX_DIM {
            out[i] += j[i] as i32;
        }
        out
    }

    // One unconditioned bush rooted at `parent_site + θ`. Detect mode
    // (hits = None) returns on the first K-hit; collect mode records every
    // hit. Subtrees rooted outside the stop ball are pruned and counted;
    // a bush exceeding BUSH_CAP charges its open frontier to the residual.
    fn bush(
        &mut self,
        parent_site: &ISite,
        rng: &mut Rng,
        mut hits: Option<&mut Vec<Site>>,
    ) -> BushOutcome {
        let root = self.step(parent_site, rng);
        self.stack.clear();
        let mut outcome = BushOutcome::Clean;
        let mut local: u64 = 1;
        self.explored += 1;
        let (inside, dist) = self.region.classify(&root);
        if inside {
            match hits.as_mut() {
                None => return BushOutcome::Hit,
                Some(h) => {
                    h.push(to_site(root));
                    outcome = BushOutcome::Hit;
                }
            }
        }
        if dist > self.r_stop {
            self.prunes += 1;
            return outcome;
        }
        let d0 = self.mu.sample_offspring(rng);
        if d0 > 0 {
            self.stack.push((root, d0));
        }
        while let Some(top) = self.stack.last_mut() {
            if top.1 == 0 {
                self.stack.pop();
                continue;
            }
            top.1 -= 1;
            let from = top.0;
            let site = self.step(&from, rng);
            self.explored += 1;
            local += 1;
            if self.explored > self.max_explored {
                self.budget_hit = true;
                return outcome;
            }
            let (inside, dist) = self.region.classify(&site);
            if inside {
                match hits.as_mut() {
                    None => return BushOutcome::Hit,
                    Some(h) => {
                        h.push(to_site(site));
                        outcome = BushOutcome::Hit;
                    }
                }
            }
            if dist > self.r_stop {
                self.prunes += 1;
                continue;
            }
            if local >= BUSH_CAP {
                // charge every open child slot with the bush profile at
                // its site (a probability, capped at one per slot and at
                // one per event), then abandon the bush
                self.cap_events += 1;
                let mut event = 0.0f64;
                for &(s, left) in self.stack.iter() {
                    if left == 0 {
                        continue;
                    }
                    let (_, r) = self.region.classify(&s);
                    let ratio = self.profile_r0 / (r.max(1) as f64);
                    event += left as f64 * (self.q_bush * ratio.powi(3)).min(1.0);
                }
                self.capped_prob += event.min(1.0);
                self.stack.clear();
                return outcome;
            }
            let d = self.mu.sample_offspring(rng);
            if d > 0 {
                self.stack.push((site, d));
            }
        }
        outcome
    }
}

struct PastOutcome {
    avoided: bool,
    prunes: u64,
    explored: u64,
    capped_prob: f64,
    cap_events: u64,
    budget_hit: bool,
    /// spine sites with their left-bush counts, for a later future pass
    levels: Vec<(Site, u32)>,
}

// Simulates the past of a trajectory rooted at x: the descending special
// spine with its right-grafted bushes. Walks until the spine leaves the
// stop ball (one tail prune) or a past vertex hits K.
fn simulate_past(
    mu: &OffspringDist,
    theta: &JumpDist,
    region: &Region,
    x: Site,
    params: &EsParams,
    rng: &mut Rng,
    keep_levels: bool,
    q_bush: f64,
) -> PastOutcome {
    let mut sim = Sim::new(mu, theta, region, params.r_stop, params.max_explored, q_bush);
    let mut levels = Vec::new();
    let mut site = to_isite(x);
    let mut avoided = true;
    loop {
        // next spine vertex
        site = sim.step(&site, rng);
        sim.explored += 1;
        let (inside, dist) = sim.region.classify(&site);
        if inside {
            avoided = false;
            break;
        }
        // reproduction: size-biased count, uniform spine position;
        // children after the spine child are the right (past) bushes
        let k = mu.sample_size_biased(rng);
        let pos = rng.below(k as u64) as u32;
        let right = k - 1 - pos;
        let mut hit = false;
        for _ in 0..right {
            if matches!(sim.bush(&site, rng, None), BushOutcome::Hit) {
                hit = true;
                break;
            }
        }
        if keep_levels {
            levels.push((to_site(site), pos));
        }
        if hit {
            avoided = false;
            break;
        }
        if sim.budget_hit {
            break;
        }
        if dist > params.r_stop {
            sim.prunes += 1; // the whole tail continuation
            break;
        }
        if sim.explored > params.max_explored {
            sim.budget_hit = true;
            break;
        }
    }
    PastOutcome {
        avoided,
        prunes: sim.prunes,
        explored: sim.explored,
        capped_prob: sim.capped_prob,
        cap_events: sim.cap_events,
        budget_hit: sim.budget_hit,
        levels,
    }
}

// Future side of an accepted trajectory: the root's elder bushes plus the
// left bushes of every materialized spine level. Collects K-hits.
fn simulate_future(
    mu: &OffspringDist,
    theta: &JumpDist,
    region: &Region,
    x: Site,
    levels: &[(Site, u32)],
    params: &EsParams,
    rng: &mut Rng,
    hits: &mut Vec<Site>,
    q_bush: f64,
) -> (u64, f64, bool) {
    let mut sim = Sim::new(mu, theta, region, params.r_stop, params.max_explored, q_bush);
    // root offspring: i children with probability µ(i−1), spine child last
    let elder = mu.sample_offspring(rng);
    let xi = to_isite(x);
    for _ in 0..elder {
        let _ = sim.bush(&xi, rng, Some(hits));
        if sim.budget_hit {
            break;
        }
    }
    for &(site, left) in levels {
        let si = to_isite(site);
        for _ in 0..left {
            let _ = sim.bush(&si, rng, Some(hits));
            if sim.budget_hit {
                break;
            }
        }
    }
    (sim.prunes, sim.capped_prob, sim.budget_hit)
}

// --- fitted hitting profiles ------------------------------------------------

/// Uniform site at sup-norm distance `r` from a region point.
fn sphere_site(region: &Region, r: i32, d: usize, rng: &mut Rng) -> Site {
    let anchor = match region {
        Region::Points(pts) => pts[rng.below_usize(pts.len())],
        Region::Box { .. } => ORIGIN,
    };
    let extra = match region {
        Region::Points(_) => 0,
        Region::Box { radius, .. } => *radius,
    };
    // uniform on the sup-sphere: pick the maximal axis, then free coords
    loop {
        let mut s = anchor;
        let axis = rng.below_usize(d);
        let sign = if rng.below(2) == 0 { 1 } else { -1 };
        let rr = r + extra;
        let mut ok = true;
        for i in 0..d {
            let c = if i == axis {
                sign * rr
            } else {
                rng.below((2 * rr + 1) as u64) as i32 - rr
            };
            match (s[i] as i32).checked_add(c).and_then(|v| i16::try_from(v).ok()) {
                Some(v) => s[i] = v,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && region.sup_dist(s) == r {
            return s;
        }
    }
}

/// Fits the two hitting profiles at the stop radius by auxiliary runs with
/// a doubled exploration ball. The geometric tail beyond the doubled ball
/// is absorbed by the factor 1/(1 − 2^{4−d}).
pub fn fit_profiles(
    mu: &OffspringDist,
    theta: &JumpDist,
    region: &Region,
    params: &EsParams,
    rng: &mut Rng,
) -> Profiles {
    let d = theta.d();
    assert!(d >= 5, "residual profiles assume d >= 5");
    let inflate = 1.0 / (1.0 - 2f64.powi(4 - d as i32));
    let r0 = params.r_stop + 1;

    // trajectory tail from the stop sphere, explored inside 2·r_stop + 2
    let mut aux = *params;
    aux.r_stop = 2 * params.r_stop + 2;
    let mut hits = 0u64;
    for _ in 0..params.aux_tail_samples {
        let s0 = sphere_site(region, r0, d, rng);
        let out = simulate_past(mu, theta, region, s0, &aux, rng, false, 0.0);
        if !out.avoided {
            hits += 1;
        }
    }
    let p = hits as f64 / params.aux_tail_samples as f64;
    let se = (p.max(1e-12) * (1.0 - p) / params.aux_tail_samples as f64).sqrt();
    let q_tail = (inflate * (p + 3.0 * se + 1.0 / params.aux_tail_samples as f64)).min(1.0);

    // single bush from the stop sphere
    let mut sim = Sim::new(mu, theta, region, aux.r_stop, params.max_explored, 0.0);
    let mut bush_hits = 0u64;
    for _ in 0..params.aux_bush_samples {
        let s0 = to_isite(sphere_site(region, r0, d, rng));
        if matches!(sim.bush(&s0, rng, None), BushOutcome::Hit) {
            bush_hits += 1;
        }
    }
    let pb = bush_hits as f64 / params.aux_bush_samples as f64;
    let q_bush =
        (inflate * (pb + 3.0 / params.aux_bush_samples as f64)).min(1.0);

    Profiles { q_tail, q_bush }
}

// --- estimators --------------------------------------------------------------

#[derive(Default, Clone)]
struct EsAccum {
    avoid: Estimate,
    residual_sum: f64,
    prunes: u64,
    explored: u64,
    survivors: u64,
    budget_failures: u64,
    cap_events: u64,
}

impl EsAccum {
    fn merge(&mut self, o: EsAccum) {
        self.avoid.merge(&o.avoid);
        self.residual_sum += o.residual_sum;
        self.prunes += o.prunes;
        self.explored += o.explored;
        self.survivors += o.survivors;
        self.budget_failures += o.budget_failures;
        self.cap_events += o.cap_events;
    }
}

/// Escape probability Es_K(x) for x ∈ K.
pub fn estimate_es(
    region: &Region,
    x: Site,
    mu: &OffspringDist,
    theta: &JumpDist,
    params: &EsParams,
    seed: u64,
) -> Result<EsEstimate> {
    if !region.contains(x) {
        return Err(Error::precondition("estimate_es: x must lie in K"));
    }
    if theta.d() < 5 {
        return Err(Error::precondition("escape probabilities need d >= 5"));
    }
    let mut prof_rng = Rng::for_replica(seed, u64::MAX).substream(0xAAF1);
    let profiles = fit_profiles(mu, theta, region, params, &mut prof_rng);
    es_with_profiles(region, Some(x), mu, theta, params, seed, &profiles)
}

fn es_with_profiles(
    region: &Region,
    fixed_x: Option<Site>,
    mu: &OffspringDist,
    theta: &JumpDist,
    params: &EsParams,
    seed: u64,
    profiles: &Profiles,
) -> Result<EsEstimate> {
    let shell = match fixed_x {
        Some(_) => Vec::new(),
        None => region.escape_shell(theta),
    };
    let acc: EsAccum = crate::parallel::fold_replicas(
        params.workers,
        params.samples,
        1024,
        |r, acc: &mut EsAccum| {
            let mut rng = Rng::for_replica(seed, r);
            let x = match fixed_x {
                Some(x) => x,
                None => shell[rng.below_usize(shell.len())],
            };
            let out =
                simulate_past(mu, theta, region, x, params, &mut rng, false, profiles.q_bush);
            if out.budget_hit {
                acc.budget_failures += 1;
            }
            acc.avoid.push_bool(out.avoided);
            acc.prunes += out.prunes;
            acc.explored += out.explored;
            acc.cap_events += out.cap_events;
            if out.avoided {
                acc.survivors += 1;
                // tail stop contributes once, each pruned bush point and
                // each capped-bush frontier slot once
                acc.residual_sum += profiles.q_tail
                    + out.prunes.saturating_sub(1) as f64 * profiles.q_bush
                    + out.capped_prob;
            }
        },
        EsAccum::merge,
    );
    if acc.budget_failures > 0 {
        return Err(Error::truncation(format!(
            "estimate_es: {} of {} samples exceeded the exploration budget",
            acc.budget_failures, params.samples
        )));
    }
    Ok(EsEstimate {
        value: acc.avoid.mean(),
        stderr: acc.avoid.stderr(),
        residual: (acc.residual_sum / params.samples as f64).min(1.0),
        samples: params.samples,
        mean_prunes: acc.prunes as f64 / acc.survivors.max(1) as f64,
        mean_explored: acc.explored as f64 / params.samples as f64,
        cap_events: acc.cap_events,
    })
}

/// Branching capacity BCap(K) = Σ_{x∈K} Es_K(x). Point regions get one Es
/// estimate per point (the per-point budget is `samples`); boxes use a
/// uniform-shell aggregate with `samples` total draws.
pub fn estimate_bcap(
    region: &Region,
    mu: &OffspringDist,
    theta: &JumpDist,
    params: &EsParams,
    seed: u64,
) -> Result<CapEstimate> {
    if theta.d() < 5 {
        return Err(Error::precondition("branching capacity needs d >= 5"));
    }
    let mut prof_rng = Rng::for_replica(seed, u64::MAX).substream(0xAAF1);
    let profiles = fit_profiles(mu, theta, region, params, &mut prof_rng);
    match region {
        Region::Points(pts) => {
            let mut points = Vec::new();
            let mut bcap = 0.0;
            let mut var = 0.0;
            let mut residual = 0.0;
            for (i, &x) in pts.iter().enumerate() {
                let est = es_with_profiles(
                    region,
                    Some(x),
                    mu,
                    theta,
                    params,
                    seed.wrapping_add(1 + i as u64),
                    &profiles,
                )?;
                bcap += est.value;
                var += est.stderr * est.stderr;
                residual += est.residual;
                points.push((x, est));
            }
            Ok(CapEstimate {
                points: Some(points),
                bcap,
                stderr: var.sqrt(),
                residual,
                r_stop: params.r_stop,
                samples: params.samples,
            })
        }
        Region::Box { .. } => {
            let shell_size = region.escape_shell(theta).len() as f64;
            let est = es_with_profiles(region, None, mu, theta, params, seed, &profiles)?;
            Ok(CapEstimate {
                points: None,
                bcap: shell_size * est.value,
                stderr: shell_size * est.stderr,
                residual: shell_size * est.residual,
                r_stop: params.r_stop,
                samples: params.samples,
            })
        }
    }
}

/// Branching harmonic measure m_K(x) = Es_K(x)/BCap(K); needs a per-point
/// capacity estimate.
pub fn harmonic_measure(cap: &CapEstimate) -> Result<Vec<(Site, f64)>> {
    if cap.bcap <= 0.0 {
        return Err(Error::precondition("harmonic measure needs BCap > 0"));
    }
    let points = cap
        .points
        .as_ref()
        .ok_or_else(|| Error::precondition("harmonic measure needs per-point estimates"))?;
    Ok(points
        .iter()
        .map(|&(x, ref e)| (x, e.value / cap.bcap))
        .collect())
}

/// One draw of the local interlacement set I^u ∩ K.
#[derive(Clone, Debug, Default)]
pub struct InterlacementDraw {
    pub hit_set: Vec<Site>,
    pub proposals: u64,
    pub accepted: u64,
    /// unresolved hit-mass bound accumulated over accepted trajectories
    pub residual: f64,
}

/// Poisson sample with small mean (Knuth).
pub fn poisson(lambda: f64, rng: &mut Rng) -> u64 {
    assert!(lambda >= 0.0 && lambda < 700.0);
    let l = (-lambda).exp();
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.next_f64();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

/// Exact-law sampler for I^u ∩ K by Poisson thinning: M ~ Poisson(u·|K|)
/// proposals, each a full two-sided trajectory from a uniform point of K,
/// accepted when its past avoids K. No capacity estimate is needed; the
/// accepted count is automatically Poisson(u·BCap(K)).
pub fn sample_interlacement_local(
    k_points: &[Site],
    u: f64,
    mu: &OffspringDist,
    theta: &JumpDist,
    params: &EsParams,
    profiles: &Profiles,
    rng: &mut Rng,
) -> Result<InterlacementDraw> {
    if u < 0.0 {
        return Err(Error::precondition("level u must be nonnegative"));
    }
    let region = Region::Points(k_points.to_vec());
    let m = poisson(u * k_points.len() as f64, rng);
    let mut draw = InterlacementDraw {
        proposals: m,
        ..Default::default()
    };
    let mut hits: Vec<Site> = Vec::new();
    for _ in 0..m {
        let x = k_points[rng.below_usize(k_points.len())];
        let past = simulate_past(mu, theta, &region, x, params, rng, true, profiles.q_bush);
        if past.budget_hit {
            return Err(Error::truncation(
                "interlacement proposal exceeded the exploration budget",
            ));
        }
        if !past.avoided {
            continue;
        }
        draw.accepted += 1;
        hits.clear();
        hits.push(x);
        let (fprunes, fcapped, budget) = simulate_future(
            mu, theta, &region, x, &past.levels, params, rng, &mut hits, profiles.q_bush,
        );
        if budget {
            return Err(Error::truncation(
                "interlacement future pass exceeded the exploration budget",
            ));
        }
        // both sides of the tail remain unresolved, plus pruned bushes and
        // capped frontiers
        draw.residual += 2.0 * profiles.q_tail
            + (past.prunes.saturating_sub(1) + fprunes) as f64 * profiles.q_bush
            + past.capped_prob
            + fcapped;
        for &h in hits.iter() {
            if !draw.hit_set.contains(&h) {
                draw.hit_set.push(h);
            }
        }
    }
    draw.hit_set.sort_unstable();
    Ok(draw)
}

/// Covariance decay fit: estimates Cov(1_{x∈I^u}, 1_{y∈I^u}) over site
/// pairs at increasing distance and returns (distances, covariances,
/// fitted log-log slope).
pub fn covariance_profile(
    u: f64,
    pair_distances: &[i32],
    mu: &OffspringDist,
    theta: &JumpDist,
    params: &EsParams,
    runs_per_pair: u64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let d = theta.d();
    let mut dists = Vec::new();
    let mut covs = Vec::new();
    for (pi, &dist) in pair_distances.iter().enumerate() {
        let mut y = ORIGIN;
        y[0] = dist as i16;
        let pts = vec![ORIGIN, y];
        let region = Region::Points(pts.clone());
        let mut prof_rng = Rng::for_replica(seed, 7_000 + pi as u64).substream(0xAAF1);
        let profiles = fit_profiles(mu, theta, &region, params, &mut prof_rng);
        #[derive(Default)]
        struct Acc {
            both: u64,
            x: u64,
            y: u64,
        }
        let acc = crate::parallel::fold_replicas(
            params.workers,
            runs_per_pair,
            256,
            |r, acc: &mut Acc| {
                let mut rng = Rng::for_replica(seed, (pi as u64) << 32 | r);
                let draw =
                    sample_interlacement_local(&pts, u, mu, theta, params, &profiles, &mut rng)
                        .expect("interlacement draw");
                let hx = draw.hit_set.contains(&pts[0]);
                let hy = draw.hit_set.contains(&pts[1]);
                acc.both += u64::from(hx && hy);
                acc.x += u64::from(hx);
                acc.y += u64::from(hy);
            },
            |a, b| {
                a.both += b.both;
                a.x += b.x;
                a.y += b.y;
            },
        );
        let n = runs_per_pair as f64;
        let cov = acc.both as f64 / n - (acc.x as f64 / n) * (acc.y as f64 / n);
        dists.push(dist as f64);
        covs.push(cov);
    }
    let logs: (Vec<f64>, Vec<f64>) = dists
        .iter()
        .zip(&covs)
        .filter(|&(_, &c)| c > 0.0)
        .map(|(&d0, &c)| (d0.ln(), c.ln()))
        .unzip();
    let slope = if logs.0.len() >= 2 {
        crate::stats::linear_fit(&logs.0, &logs.1).0
    } else {
        f64::NAN
    };
    let _ = d;
    Ok((dists, covs, slope))
}
