//! Multi-scale bookkeeping: scale schedules, block hierarchies, resonant
//! sets, good/regular classification, the set-extension and regularization
//! cascades, and empirical verification of the good-set Green's bounds.

use crate::error::{CoreError, Result};
use crate::lattice::{cube_at_origin, LatticePoint, LatticeSet};
use crate::operator::{assemble, decay_bound, ModelParams};
use crate::quasiperiodic::Side;
use crate::rellich::CurveOracle;
use serde::Serialize;

pub const MAX_SCALES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Theoretical,
    Practical,
}

/// Regime expectations reported for (not enforced on) a schedule.
#[derive(Clone, Debug, Serialize)]
pub struct ScheduleFlags {
    /// gamma_inf >= gamma_0 / 2 >= 10.
    pub rate_ok: bool,
    pub l_strictly_increasing: bool,
    pub delta_strictly_decreasing: bool,
    pub gamma_nonincreasing: bool,
}

/// The inductive parameters (l_n, delta_n, gamma_n) plus the running
/// tolerance budgets. All derived sequences are recomputed from
/// (l_1, delta_0, epsilon) by the fixed recurrences.
#[derive(Clone, Debug, Serialize)]
pub struct ScaleSchedule {
    pub regime: Regime,
    pub epsilon: f64,
    pub epsilon0: Option<f64>,
    /// l_1..l_N.
    lengths: Vec<u64>,
    /// delta_0..delta_N.
    deltas: Vec<f64>,
    /// gamma_0..gamma_N.
    gammas: Vec<f64>,
    pub gamma_inf: f64,
    /// tolerance_budget[m] = sum_{k<=m} delta_k.
    pub tolerance_budget: Vec<f64>,
    pub flags: ScheduleFlags,
}

fn gamma0_of(epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        f64::INFINITY
    } else {
        0.5 * epsilon.ln().abs()
    }
}

impl ScaleSchedule {
    pub fn theoretical(epsilon: f64, epsilon0: f64, num_scales: usize) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
            return Err(CoreError::DegenerateSchedule(
                "epsilon0 must lie in (0, 1)".into(),
            ));
        }
        let delta0 = epsilon0.powf(1.0 / 20.0);
        let l1 = delta0.ln().abs().powi(4).floor();
        if l1 < 2.0 {
            return Err(CoreError::DegenerateSchedule(format!(
                "epsilon0 = {epsilon0:e} gives l1 = {l1} < 2"
            )));
        }
        Self::build(
            Regime::Theoretical,
            epsilon,
            Some(epsilon0),
            l1 as u64,
            delta0,
            num_scales,
        )
    }

    pub fn practical(epsilon: f64, l1: u64, delta0: f64, num_scales: usize) -> Result<Self> {
        if l1 < 2 {
            return Err(CoreError::DegenerateSchedule("l1 must be >= 2".into()));
        }
        if !(delta0 > 0.0 && delta0 < 1.0) {
            return Err(CoreError::DegenerateSchedule(
                "delta0 must lie in (0, 1)".into(),
            ));
        }
        Self::build(Regime::Practical, epsilon, None, l1, delta0, num_scales)
    }

    fn build(
        regime: Regime,
        epsilon: f64,
        epsilon0: Option<f64>,
        l1: u64,
        delta0: f64,
        num_scales: usize,
    ) -> Result<Self> {
        if epsilon < 0.0 {
            return Err(CoreError::DegenerateSchedule("epsilon must be >= 0".into()));
        }
        if num_scales == 0 || num_scales > MAX_SCALES {
            return Err(CoreError::DegenerateSchedule(format!(
                "number of scales must be in 1..={MAX_SCALES}"
            )));
        }
        let mut lengths = Vec::with_capacity(num_scales);
        let mut cur = l1;
        for m in 1..=num_scales {
            if m > 1 {
                cur = cur
                    .checked_mul(cur)
                    .ok_or_else(|| CoreError::DegenerateSchedule("length overflow".into()))?;
            }
            lengths.push(cur);
        }
        let mut deltas = vec![delta0];
        for &l in &lengths {
            deltas.push((-(l as f64).powf(2.0 / 3.0)).exp());
        }
        let gamma0 = gamma0_of(epsilon);
        let mut gammas = vec![gamma0];
        let mut acc = 1.0;
        for &l in &lengths {
            acc *= 1.0 - (l as f64).powf(-1.0 / 80.0);
            gammas.push(gamma0 * acc);
        }
        // Infinite product in log space; l_k grows doubly exponentially so a
        // handful of factors reach convergence.
        let mut inf_acc = 1.0f64;
        let ln_l1 = (l1 as f64).ln();
        for k in 1..64 {
            let ln_lk = 2f64.powi(k - 1) * ln_l1;
            let term = (-ln_lk / 80.0).exp();
            if term < 1e-18 {
                break;
            }
            inf_acc *= 1.0 - term;
        }
        let gamma_inf = gamma0 * inf_acc;

        let mut tolerance_budget = Vec::with_capacity(deltas.len());
        let mut sum = 0.0;
        for &d in &deltas {
            sum += d;
            tolerance_budget.push(sum);
        }
        let flags = ScheduleFlags {
            rate_ok: gamma_inf >= 0.5 * gamma0 && 0.5 * gamma0 >= 10.0,
            l_strictly_increasing: lengths.windows(2).all(|w| w[1] > w[0]),
            delta_strictly_decreasing: deltas.windows(2).all(|w| w[1] < w[0]),
            gamma_nonincreasing: gammas.windows(2).all(|w| w[1] <= w[0]),
        };
        Ok(Self {
            regime,
            epsilon,
            epsilon0,
            lengths,
            deltas,
            gammas,
            gamma_inf,
            tolerance_budget,
            flags,
        })
    }

    /// Number of inductive scales N.
    pub fn num_scales(&self) -> usize {
        self.lengths.len()
    }

    /// l_m for 1 <= m <= N.
    pub fn length(&self, m: usize) -> u64 {
        assert!(m >= 1 && m <= self.lengths.len(), "scale {m} out of range");
        self.lengths[m - 1]
    }

    /// l_m extended past the stored scales in floating point.
    pub fn length_f(&self, m: usize) -> f64 {
        assert!(m >= 1);
        let l1 = self.lengths[0] as f64;
        (2f64.powi(m as i32 - 1) * l1.ln()).exp()
    }

    /// delta_m for 0 <= m <= N.
    pub fn delta(&self, m: usize) -> f64 {
        self.deltas[m]
    }

    /// gamma_m for 0 <= m <= N.
    pub fn gamma(&self, m: usize) -> f64 {
        self.gammas[m]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn lengths(&self) -> &[u64] {
        &self.lengths
    }

    /// Window half-width for the scale-m root search: 10 delta_{m-1}.
    pub fn search_radius(&self, m: usize) -> f64 {
        assert!(m >= 1);
        10.0 * self.deltas[m - 1]
    }

    /// |E_m - E_{m-1}| budget: e^{-l_{m-1}}, read as epsilon at m = 1.
    pub fn resonance_budget(&self, m: usize) -> f64 {
        assert!(m >= 1);
        if m == 1 {
            self.epsilon
        } else {
            (-(self.length(m - 1) as f64)).exp()
        }
    }

    /// Off-diagonal decay threshold l_m^{5/6} (1 at scale 0).
    pub fn decay_threshold(&self, m: usize) -> f64 {
        if m == 0 {
            1.0
        } else {
            (self.length(m) as f64).powf(5.0 / 6.0)
        }
    }
}

/// Per-scale separation premise:
/// L gamma_dc (max ||x||_1 over B_{m+1})^{-tau} at least 20 delta_m. When it
/// holds, translates of the scale-m curve over the next block stay
/// 20 delta_m apart and the disk-local root windows are clean.
pub fn separation_premises(
    params: &ModelParams,
    schedule: &ScaleSchedule,
    hierarchy: &BlockHierarchy,
) -> Vec<bool> {
    let l = params.potential.lipschitz_l;
    let gamma = params.freq.gamma_dc;
    let tau = params.freq.tau;
    (0..schedule.num_scales())
        .map(|m| {
            let block = hierarchy.block(m + 1);
            let max_norm = block.iter().map(|p| p.norm1()).max().unwrap_or(0) as f64;
            l * gamma * max_norm.powf(-tau) >= 20.0 * schedule.delta(m)
        })
        .collect()
}

/// Nested blocks B_0 ⊂ B_1 ⊂ ... ⊂ B_N centered at the origin.
#[derive(Clone, Debug)]
pub struct BlockHierarchy {
    blocks: Vec<LatticeSet>,
    pub construction_log: Vec<String>,
}

impl BlockHierarchy {
    /// Plain cube hierarchy B_m = Q_{l_m}; the default when no resonance
    /// probes force inflation.
    pub fn from_cubes(schedule: &ScaleSchedule, dim: usize) -> Result<Self> {
        let mut blocks = vec![LatticeSet::singleton(LatticePoint::origin(dim)?)];
        for m in 1..=schedule.num_scales() {
            blocks.push(cube_at_origin(schedule.length(m) as i64, dim)?);
        }
        Ok(Self {
            blocks,
            construction_log: vec!["cube hierarchy".into()],
        })
    }

    pub fn from_blocks(blocks: Vec<LatticeSet>, log: Vec<String>) -> Self {
        Self {
            blocks,
            construction_log: log,
        }
    }

    /// B_m for 0 <= m <= N.
    pub fn block(&self, m: usize) -> &LatticeSet {
        &self.blocks[m]
    }

    pub fn num_scales(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Q_{l_m} ⊆ B_m ⊆ Q_{l_m + 50 l_{m-1}} for each m >= 1 (l_0 read as 0).
    pub fn sandwich_ok(&self, schedule: &ScaleSchedule) -> Result<Vec<bool>> {
        let dim = self.blocks[0].dim();
        let mut out = Vec::new();
        for m in 1..self.blocks.len() {
            let inner = cube_at_origin(schedule.length(m) as i64, dim)?;
            let pad = if m == 1 {
                0
            } else {
                50 * schedule.length(m - 1) as i64
            };
            let outer = cube_at_origin(schedule.length(m) as i64 + pad, dim)?;
            out.push(inner.is_subset_of(&self.blocks[m]) && self.blocks[m].is_subset_of(&outer));
        }
        Ok(out)
    }
}

/// S_m(theta, E) within the search region: sites p with
/// |E_m(theta + p.omega) - E| < delta_m, left limits when side = Left.
/// Unbounded-potential poles give infinite curve limits and are therefore
/// never resonant, but they are evaluated, not skipped.
///
/// E_m(phase) is an eigenvalue of H_{B_m}(phase), so a site whose block has
/// no eigenvalue within delta_m of E cannot be resonant; in d = 1 that is
/// two Sturm counts on a tridiagonal assembled in O(n), which prunes the
/// scan before any root finding happens.
pub fn resonant_set(
    oracle: &CurveOracle,
    m: usize,
    theta: f64,
    side: Side,
    e: f64,
    search: &LatticeSet,
) -> Result<LatticeSet> {
    let delta = oracle.schedule.delta(m);
    let mut hits = Vec::new();
    for p in search.iter() {
        let phase = theta + oracle.params.freq.phase_shift(p);
        if m >= 1 {
            if let Some(false) = block_spectrum_near(oracle, m, phase, side, e, delta) {
                continue;
            }
        }
        let val = oracle.value(m, phase, side)?.value;
        if (val - e).abs() < delta {
            hits.push(p.clone());
        }
    }
    LatticeSet::new(hits, search.dim())
}

/// Whether H_{B_m}(phase) has an eigenvalue in (e - delta, e + delta);
/// None when the cheap tridiagonal route does not apply (d >= 2 or a pole
/// on the block).
fn block_spectrum_near(
    oracle: &CurveOracle,
    m: usize,
    phase: f64,
    side: Side,
    e: f64,
    delta: f64,
) -> Option<bool> {
    let block = oracle.hierarchy.block(m);
    if block.dim() != 1 {
        return None;
    }
    let pts = block.points();
    let n = pts.len();
    let mut diag = Vec::with_capacity(n);
    for x in pts {
        let v = oracle.params.site_value(phase, side, x);
        if !v.is_finite() {
            return None;
        }
        diag.push(v);
    }
    let eps = oracle.params.epsilon;
    let off: Vec<f64> = pts
        .windows(2)
        .map(|w| if w[0].dist1(&w[1]) == 1 { eps } else { 0.0 })
        .collect();
    let t = crate::linalg::Tridiag { diag, off };
    let below_hi = crate::linalg::sturm_count_below(&t, e + delta);
    let below_lo = crate::linalg::sturm_count_below(&t, e - delta);
    Some(below_hi > below_lo)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    /// None encodes the +infinity sentinel for |S| <= 1.
    pub min_dist: Option<i64>,
    pub required: f64,
    pub ok: bool,
}

/// Minimum pairwise distance in a resonant set against the 100 l_{m+1}
/// separation the induction expects.
pub fn separation_check(s: &LatticeSet, m: usize, schedule: &ScaleSchedule) -> SeparationReport {
    let required = 100.0 * schedule.length_f(m + 1);
    if s.len() <= 1 {
        return SeparationReport {
            min_dist: None,
            required,
            ok: true,
        };
    }
    let pts = s.points();
    let mut min_dist = i64::MAX;
    for (i, x) in pts.iter().enumerate() {
        for y in pts.iter().skip(i + 1) {
            min_dist = min_dist.min(x.dist1(y));
        }
    }
    SeparationReport {
        min_dist: Some(min_dist),
        required,
        ok: (min_dist as f64) >= required,
    }
}

/// Absorb the cubes Q_L + x (x in X) that meet B: the result is the union
/// of B with every translate Q_L + x (x in X) intersecting B.
///
/// Premise (checked): pairwise distances in X >= 10 L. Postconditions
/// (verified): the result contains B, stays within l^1 distance 2L of it,
/// and every x in X whose cube meets the result has its whole cube inside.
pub fn extend_set(b: &LatticeSet, x_set: &LatticeSet, l: i64) -> Result<LatticeSet> {
    let pts = x_set.points();
    for (i, x) in pts.iter().enumerate() {
        for y in pts.iter().skip(i + 1) {
            let d = x.dist1(y);
            if d < 10 * l {
                return Err(CoreError::PremiseViolated {
                    a: x.coords().to_vec(),
                    b: y.coords().to_vec(),
                    dist: d,
                    required: 10 * l,
                });
            }
        }
    }
    let mut result = b.clone();
    for x in pts {
        let q = crate::lattice::cube(l, x);
        if q.iter().any(|p| b.contains(p)) {
            // Every absorbed point sits within L of x, and x within L of B,
            // which is the first postcondition for these points.
            debug_assert!(b.iter().any(|p| p.dist1(x) <= l));
            result = result.union(&q);
        }
    }
    debug_assert!(b.is_subset_of(&result));
    // Second postcondition: a cube meeting the result is wholly absorbed.
    for x in pts {
        let q = crate::lattice::cube(l, x);
        if q.iter().any(|p| result.contains(p)) && !q.is_subset_of(&result) {
            return Err(CoreError::NumericalFailure(
                "extend_set postcondition failed: cube partially absorbed".into(),
            ));
        }
    }
    Ok(result)
}

/// Good/regular/nonresonant classification of a finite set at scale m.
#[derive(Clone, Debug, Serialize)]
pub struct GoodnessReport {
    pub scale: usize,
    pub theta: f64,
    pub energy: f64,
    pub nonresonant: bool,
    pub regular: bool,
    pub good: bool,
    /// Sites of set ∩ S_m.
    pub resonant_witnesses: Vec<Vec<i64>>,
    /// (site, k): p ∈ set ∩ S_k with B_{k+1}(p) ⊄ set.
    pub regularity_witnesses: Vec<(Vec<i64>, usize)>,
}

/// Classify `set` relative to (theta[side], E): m-nonresonant iff it misses
/// S_m, m-regular iff every lower-scale resonance p ∈ set ∩ S_k carries its
/// whole block B_{k+1}(p) inside the set.
pub fn classify(
    oracle: &CurveOracle,
    set: &LatticeSet,
    m: usize,
    theta: f64,
    side: Side,
    e: f64,
) -> Result<GoodnessReport> {
    let top = resonant_set(oracle, m, theta, side, e, set)?;
    let resonant_witnesses: Vec<Vec<i64>> = top.iter().map(|p| p.coords().to_vec()).collect();
    let mut regularity_witnesses = Vec::new();
    for k in 0..m {
        let sk = resonant_set(oracle, k, theta, side, e, set)?;
        for p in sk.iter() {
            let block = oracle.hierarchy.block(k + 1).translate(p);
            if !block.is_subset_of(set) {
                regularity_witnesses.push((p.coords().to_vec(), k));
            }
        }
    }
    let nonresonant = resonant_witnesses.is_empty();
    let regular = regularity_witnesses.is_empty();
    Ok(GoodnessReport {
        scale: m,
        theta,
        energy: e,
        nonresonant,
        regular,
        good: nonresonant && regular,
        resonant_witnesses,
        regularity_witnesses,
    })
}

/// All points within l^1 distance `r` of `b`.
fn dilate(b: &LatticeSet, r: i64) -> LatticeSet {
    let dim = b.dim();
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for p in b.iter() {
        for (i, c) in p.coords().iter().enumerate() {
            lo[i] = lo[i].min(*c);
            hi[i] = hi[i].max(*c);
        }
    }
    let mut out = Vec::new();
    let mut coords = vec![0i64; dim];
    enumerate_box(&lo, &hi, r, 0, &mut coords, &mut |p: LatticePoint| {
        if b.iter().any(|q| q.dist1(&p) <= r) {
            out.push(p);
        }
    });
    LatticeSet::new(out, dim).expect("dilation preserves dimension")
}

fn enumerate_box(
    lo: &[i64],
    hi: &[i64],
    r: i64,
    axis: usize,
    coords: &mut Vec<i64>,
    visit: &mut impl FnMut(LatticePoint),
) {
    if axis == lo.len() {
        visit(LatticePoint::new(coords.clone()).expect("dimension bounded"));
        return;
    }
    for c in (lo[axis] - r)..=(hi[axis] + r) {
        coords[axis] = c;
        enumerate_box(lo, hi, r, axis + 1, coords, visit);
    }
}

/// Regularize B at scale n relative to (theta[side], E): the cascade of
/// extend_set calls with (10 l_{n-k}, S_{n-k-1}) for k = 0..n-1. The result
/// stays within dist_1 30 l_n of B and is n-regular.
pub fn regularize(
    oracle: &CurveOracle,
    b: &LatticeSet,
    n: usize,
    theta: f64,
    side: Side,
    e: f64,
) -> Result<LatticeSet> {
    let schedule = oracle.schedule;
    assert!(n >= 1 && n <= schedule.num_scales());
    let scan_radius = 50 * schedule.length(n) as i64;
    let scan = dilate(b, scan_radius);
    let mut cur = b.clone();
    for k in 0..n {
        let scale = n - k - 1;
        let l = 10 * schedule.length(n - k) as i64;
        let x = resonant_set(oracle, scale, theta, side, e, &scan)?;
        cur = extend_set(&cur, &x, l)?;
    }
    // 30 l_n sandwich; only the grown part needs checking.
    let limit = 30 * schedule.length(n) as i64;
    for p in cur.difference(b).iter() {
        if b.iter().all(|q| q.dist1(p) > limit) {
            return Err(CoreError::NumericalFailure(
                "regularize exceeded the 30 l_n sandwich".into(),
            ));
        }
    }
    Ok(cur)
}

/// Fixed-point regular hull: repeatedly absorb B_{k+1}(p) for every
/// lower-scale resonance p inside the set until m-regularity holds. Unlike
/// the cascade this needs no separation premise, so it also works at
/// generous schedules where resonances are dense; `max_sites` caps runaway
/// growth (None on overflow).
pub fn regular_hull(
    oracle: &CurveOracle,
    set: &LatticeSet,
    m: usize,
    theta: f64,
    side: Side,
    e: f64,
    max_sites: usize,
) -> Result<Option<LatticeSet>> {
    let mut cur = set.clone();
    loop {
        let mut grew = false;
        for k in 0..m {
            let sk = resonant_set(oracle, k, theta, side, e, &cur)?;
            for p in sk.iter() {
                let block = oracle.hierarchy.block(k + 1).translate(p);
                if !block.is_subset_of(&cur) {
                    cur = cur.union(&block);
                    grew = true;
                }
            }
        }
        if cur.len() > max_sites {
            return Ok(None);
        }
        if !grew {
            return Ok(Some(cur));
        }
    }
}

/// Exact-energy collapse of the probe families used to build B_{n+1}: a site
/// x enters X_m if the scale-m curve at phase shift x comes within
/// delta_m + 10 delta_n of the scale-n curve values at the probe phase
/// (endpoint phases for bounded potentials, a theta probe grid for the
/// two-sided family).
#[derive(Clone, Debug)]
pub struct ProbeConfig {
    /// Number of uniformly spaced theta probes for the two-sided family.
    pub theta_probes: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { theta_probes: 64 }
    }
}

/// Construct B_{n+1}: start from Q_{l_{n+1}} and absorb the probe-family
/// resonances scale by scale. Verifies the sandwich
/// Q_{l_{n+1}} ⊆ B ⊆ Q_{l_{n+1} + 50 l_n}.
pub fn build_block(
    oracle: &CurveOracle,
    n_plus_1: usize,
    probe: &ProbeConfig,
) -> Result<(LatticeSet, Vec<String>)> {
    let schedule = oracle.schedule;
    let n = n_plus_1 - 1;
    assert!(n_plus_1 >= 1 && n_plus_1 <= schedule.num_scales());
    let dim = oracle.params.dim();
    let scan = cube_at_origin(2 * schedule.length(n_plus_1) as i64, dim)?;
    // x_sets[k] is the probe family for the k-th cascade step (scale n-k-1).
    let mut x_sets = Vec::with_capacity(n);
    for k in 0..n {
        x_sets.push(probe_family(oracle, n - k - 1, n, probe, &scan)?);
    }
    build_block_from_sets(schedule, dim, n_plus_1, &x_sets)
}

/// The cascade of Prop-style extensions from explicitly given resonance
/// sets: x_sets[k] drives the k-th step with extension radius 10 l_{n-k}.
pub fn build_block_from_sets(
    schedule: &ScaleSchedule,
    dim: usize,
    n_plus_1: usize,
    x_sets: &[LatticeSet],
) -> Result<(LatticeSet, Vec<String>)> {
    let n = n_plus_1 - 1;
    assert!(n_plus_1 >= 1 && n_plus_1 <= schedule.num_scales());
    assert_eq!(x_sets.len(), n);
    let l_next = schedule.length(n_plus_1) as i64;
    let mut log = Vec::new();
    let mut cur = cube_at_origin(l_next, dim)?;
    for (k, x) in x_sets.iter().enumerate() {
        let l = 10 * schedule.length(n - k) as i64;
        log.push(format!(
            "scale {}: {} resonant sites, extension radius {l}",
            n - k - 1,
            x.len()
        ));
        cur = extend_set(&cur, x, l)?;
    }
    let outer = cube_at_origin(l_next + 50 * schedule.length(n.max(1)) as i64, dim)?;
    let inner = cube_at_origin(l_next, dim)?;
    if !inner.is_subset_of(&cur) || !cur.is_subset_of(&outer) {
        return Err(CoreError::NumericalFailure(
            "block construction violated the sandwich bounds".into(),
        ));
    }
    Ok((cur, log))
}

fn probe_family(
    oracle: &CurveOracle,
    m: usize,
    n: usize,
    probe: &ProbeConfig,
    scan: &LatticeSet,
) -> Result<LatticeSet> {
    let schedule = oracle.schedule;
    let width = schedule.delta(m) + 10.0 * schedule.delta(n);
    let unbounded = oracle.params.potential.is_unbounded();
    let mut hits = Vec::new();

    // Endpoint families at theta = 0 and theta = 1-0; undefined at poles for
    // unbounded potentials.
    let mut anchors: Vec<(f64, Side)> = Vec::new();
    if !unbounded {
        anchors.push((0.0, Side::Right));
        anchors.push((1.0, Side::Left));
    }
    // Two-sided family over the theta probe grid.
    let mut probes: Vec<f64> = Vec::with_capacity(probe.theta_probes);
    for i in 0..probe.theta_probes {
        probes.push((i as f64 + 0.5) / probe.theta_probes as f64);
    }

    'sites: for x in scan.iter() {
        if x.norm1() == 0 {
            continue;
        }
        let shift = oracle.params.freq.phase_shift(x);
        for (theta, side) in &anchors {
            let target = oracle.value(n, *theta, *side)?.value;
            let val = oracle.value(m, theta + shift, *side)?.value;
            if (val - target).abs() < width {
                hits.push(x.clone());
                continue 'sites;
            }
        }
        for theta in &probes {
            let lo = oracle.value(n, *theta, Side::Left)?.value;
            let hi = oracle.value(n, *theta, Side::Right)?.value;
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            for side in [Side::Right, Side::Left] {
                let val = oracle.value(m, theta + shift, side)?.value;
                let dist = if val < lo {
                    lo - val
                } else if val > hi {
                    val - hi
                } else {
                    0.0
                };
                if dist < width {
                    hits.push(x.clone());
                    continue 'sites;
                }
            }
        }
    }
    LatticeSet::new(hits, scan.dim())
}

/// Good-set Green's bound report: norm vs 10/delta_m and entry decay at rate
/// gamma_m beyond l_m^{5/6}, with the premise recorded first.
#[derive(Clone, Debug, Serialize)]
pub struct GoodsetGreensReport {
    pub premise_ok: bool,
    pub energy_gap_ok: bool,
    pub goodness: GoodnessReport,
    pub norm_ok: bool,
    pub norm_margin: f64,
    pub decay_ok: bool,
    pub decay_margin: f64,
    pub pairs_checked: usize,
}

pub fn verify_goodset_greens(
    oracle: &CurveOracle,
    set: &LatticeSet,
    m: usize,
    theta: f64,
    side: Side,
    e: f64,
    e_star: f64,
) -> Result<GoodsetGreensReport> {
    let schedule = oracle.schedule;
    let delta = schedule.delta(m);
    let gamma = schedule.gamma(m);
    let goodness = classify(oracle, set, m, theta, side, e)?;
    let energy_gap_ok = (e - e_star).abs() < delta / 5.0;
    let premise_ok = goodness.good && energy_gap_ok;

    let op = assemble(oracle.params, set, theta, side)?;
    let g = op.greens(e_star)?;
    let norm_margin = g.op_norm / (10.0 / delta);
    let threshold = schedule.decay_threshold(m);
    let mut decay_margin: f64 = 0.0;
    let mut pairs_checked = 0;
    let pts = set.points();
    for (i, x) in pts.iter().enumerate() {
        for (j, y) in pts.iter().enumerate().skip(i + 1) {
            let dist = x.dist1(y);
            if (dist as f64) < threshold {
                continue;
            }
            pairs_checked += 1;
            let bound = decay_bound(gamma, dist);
            let val = g.entries[(i, j)].abs();
            let ratio = if bound == 0.0 {
                if val == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                val / bound
            };
            decay_margin = decay_margin.max(ratio);
        }
    }
    Ok(GoodsetGreensReport {
        premise_ok,
        energy_gap_ok,
        goodness,
        norm_ok: norm_margin <= 1.0,
        norm_margin,
        decay_ok: decay_margin <= 1.0,
        decay_margin,
        pairs_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn theoretical_schedule_example() {
        let eps0 = (-40f64).exp();
        let s = ScaleSchedule::theoretical((-40f64).exp(), eps0, 2).unwrap();
        assert_abs_diff_eq!(s.delta(0), (-2f64).exp(), epsilon = 1e-15);
        assert_eq!(s.length(1), 16);
        assert_eq!(s.length(2), 256);
        assert_abs_diff_eq!(
            s.delta(1),
            (-(16f64).powf(2.0 / 3.0)).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(s.gamma(0), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn practical_schedule_example() {
        let s = ScaleSchedule::practical(1e-3, 4, 0.05, 3).unwrap();
        assert_eq!(s.lengths(), &[4, 16, 256]);
        assert_eq!(s.delta(0), 0.05);
        assert_abs_diff_eq!(s.delta(1), (-(4f64).powf(2.0 / 3.0)).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            s.delta(2),
            (-(16f64).powf(2.0 / 3.0)).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            s.delta(3),
            (-(256f64).powf(2.0 / 3.0)).exp(),
            epsilon = 1e-15
        );
        // This desk-scale schedule has delta_1 > delta_0; reported, not fatal.
        assert!(!s.flags.delta_strictly_decreasing);
        assert!(s.flags.l_strictly_increasing);
    }

    #[test]
    fn schedule_recurrences_reproduce_bit_for_bit() {
        let s = ScaleSchedule::practical(1e-3, 5, 0.02, 3).unwrap();
        let l1 = s.length(1);
        let mut l = l1;
        for m in 1..=3 {
            if m > 1 {
                l *= l;
            }
            assert_eq!(s.length(m), l);
            assert_eq!(s.delta(m), (-(l as f64).powf(2.0 / 3.0)).exp());
        }
        let gamma0 = 0.5f64 * (1e-3f64).ln().abs();
        let mut acc = 1.0;
        for m in 1..=3 {
            acc *= 1.0 - (s.length(m) as f64).powf(-1.0 / 80.0);
            assert_eq!(s.gamma(m), gamma0 * acc);
        }
    }

    #[test]
    fn zero_epsilon_schedule_has_infinite_rate() {
        let s = ScaleSchedule::practical(0.0, 4, 0.05, 2).unwrap();
        assert!(s.gamma(0).is_infinite());
        assert!(s.gamma(2).is_infinite());
        assert!(s.flags.rate_ok);
    }

    #[test]
    fn degenerate_theoretical_schedule_rejected() {
        // epsilon0 large enough that l1 < 2.
        match ScaleSchedule::theoretical(0.5, 0.5, 1) {
            Err(CoreError::DegenerateSchedule(_)) => {}
            other => panic!("expected DegenerateSchedule, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn cube_hierarchy_sandwich() {
        let s = ScaleSchedule::practical(1e-3, 4, 0.05, 2).unwrap();
        let h = BlockHierarchy::from_cubes(&s, 1).unwrap();
        assert_eq!(h.block(0).len(), 1);
        assert_eq!(h.block(1).len(), 9);
        assert_eq!(h.block(2).len(), 33);
        assert!(h.sandwich_ok(&s).unwrap().iter().all(|b| *b));
    }

    #[test]
    fn extend_set_empty_and_far() {
        let b = cube_at_origin(3, 1).unwrap();
        let empty = LatticeSet::empty(1).unwrap();
        assert_eq!(extend_set(&b, &empty, 5).unwrap(), b);
        let far = LatticeSet::singleton(LatticePoint::new(vec![100]).unwrap());
        assert_eq!(extend_set(&b, &far, 5).unwrap(), b);
    }

    #[test]
    fn extend_set_absorbs_straddling_cube() {
        let b = cube_at_origin(3, 1).unwrap();
        let x = LatticePoint::new(vec![5]).unwrap();
        let xs = LatticeSet::singleton(x.clone());
        let out = extend_set(&b, &xs, 3).unwrap();
        let expect = b.union(&crate::lattice::cube(3, &x));
        assert_eq!(out, expect);
    }

    #[test]
    fn extend_set_premise_violation() {
        let b = cube_at_origin(2, 1).unwrap();
        let xs = LatticeSet::new(
            vec![
                LatticePoint::new(vec![4]).unwrap(),
                LatticePoint::new(vec![7]).unwrap(),
            ],
            1,
        )
        .unwrap();
        match extend_set(&b, &xs, 1) {
            Err(CoreError::PremiseViolated { dist, required, .. }) => {
                assert_eq!(dist, 3);
                assert_eq!(required, 10);
            }
            other => panic!("expected PremiseViolated, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn separation_check_singleton_is_vacuous() {
        let s = ScaleSchedule::practical(1e-3, 4, 0.05, 2).unwrap();
        let single = LatticeSet::singleton(LatticePoint::new(vec![3]).unwrap());
        let rep = separation_check(&single, 0, &s);
        assert!(rep.ok);
        assert!(rep.min_dist.is_none());
    }

    fn golden_sawtooth(epsilon: f64) -> ModelParams {
        ModelParams::new(
            crate::quasiperiodic::PotentialSpec::sawtooth(),
            crate::quasiperiodic::FrequencySpec::golden(50),
            epsilon,
        )
    }

    #[test]
    fn resonant_set_matches_brute_force_scan() {
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 4, 1e-3, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let search = cube_at_origin(1000, 1).unwrap();
        let theta = 0.1234;
        let e = 0.5;
        let s0 = resonant_set(&oracle, 0, theta, Side::Right, e, &search).unwrap();
        // Independent direct scan of the potential.
        let mut brute = Vec::new();
        for p in search.iter() {
            let v = params.site_value(theta, Side::Right, p);
            if (v - e).abs() < 1e-3 {
                brute.push(p.clone());
            }
        }
        assert_eq!(s0.points(), brute.as_slice());
        assert!(!s0.is_empty(), "scan radius should catch some resonances");
    }

    #[test]
    fn resonant_set_empty_for_energy_outside_range() {
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 4, 0.05, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let search = cube_at_origin(200, 1).unwrap();
        let s0 = resonant_set(&oracle, 0, 0.3, Side::Right, 10.0, &search).unwrap();
        assert!(s0.is_empty());
    }

    #[test]
    fn resonant_set_contains_origin_on_resonance() {
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 4, 0.05, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let search = cube_at_origin(10, 1).unwrap();
        let theta = 0.3;
        let e = params.site_value(theta, Side::Right, &LatticePoint::origin(1).unwrap());
        let s0 = resonant_set(&oracle, 0, theta, Side::Right, e, &search).unwrap();
        assert!(s0.contains(&LatticePoint::origin(1).unwrap()));
    }

    #[test]
    fn resonance_nesting_s1_inside_s0() {
        // With |E_1 - E_0| <= eps and delta_1 < delta_0 - eps, every scale-1
        // resonance is a scale-0 resonance.
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 6, 0.05, 1).unwrap();
        assert!(schedule.delta(1) < schedule.delta(0));
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let search = cube_at_origin(400, 1).unwrap();
        let theta = 0.271;
        let e = 0.44;
        let s0 = resonant_set(&oracle, 0, theta, Side::Right, e, &search).unwrap();
        let s1 = resonant_set(&oracle, 1, theta, Side::Right, e, &search).unwrap();
        assert!(s1.is_subset_of(&s0));
    }

    #[test]
    fn classify_reports_witnesses() {
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 4, 0.05, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let theta = 0.3;
        // Put the origin exactly on resonance at scale 0 and take a set too
        // small to contain B_1(o): regular must fail with witness (o, 0).
        let e = params.site_value(theta, Side::Right, &LatticePoint::origin(1).unwrap());
        let small = cube_at_origin(2, 1).unwrap();
        let rep = classify(&oracle, &small, 1, theta, Side::Right, e).unwrap();
        assert!(!rep.regular);
        assert!(rep
            .regularity_witnesses
            .iter()
            .any(|(p, k)| p == &vec![0] && *k == 0));
    }

    #[test]
    fn regularize_no_resonances_is_identity() {
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 4, 0.05, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let b = cube_at_origin(6, 1).unwrap();
        // Energy far outside the potential range: no resonances anywhere.
        let out = regularize(&oracle, &b, 1, 0.3, Side::Right, 10.0).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn regularize_absorbs_block_and_is_idempotent() {
        // In-regime separation needs delta_0 well below gamma/(100 l_1)^tau;
        // at the looser curve-scan schedules the premise genuinely fails.
        let params = golden_sawtooth(1e-8);
        let schedule = ScaleSchedule::practical(1e-8, 4, 1e-7, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let theta = 0.3;
        // Exactly on resonance at the origin, so S_0 = {o} inside the scan.
        let e = params.site_value(theta, Side::Right, &LatticePoint::origin(1).unwrap());
        let b = cube_at_origin(2, 1).unwrap();
        let out = regularize(&oracle, &b, 1, theta, Side::Right, e).unwrap();
        assert!(out.len() > b.len(), "the resonance cube must be absorbed");
        let rep = classify(&oracle, &out, 1, theta, Side::Right, e).unwrap();
        assert!(rep.regular, "witnesses: {:?}", rep.regularity_witnesses);
        assert!(b.is_subset_of(&out));
        let again = regularize(&oracle, &out, 1, theta, Side::Right, e).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn regularize_premise_violation_bubbles_at_generous_delta0() {
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 4, 0.05, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let b = cube_at_origin(8, 1).unwrap();
        match regularize(&oracle, &b, 1, 0.3, Side::Right, 0.5) {
            Err(CoreError::PremiseViolated { dist, required, .. }) => {
                assert!(dist < required);
            }
            other => panic!(
                "expected PremiseViolated at delta0 = 0.05, got {:?}",
                other.map(|_| ())
            ),
        }
    }

    #[test]
    fn build_block_from_synthetic_sets_sandwich() {
        let schedule = ScaleSchedule::practical(1e-3, 4, 0.004, 2).unwrap();
        // Empty family: the block is exactly Q_{l_2}.
        let empty = LatticeSet::empty(1).unwrap();
        let (b2, _) = build_block_from_sets(&schedule, 1, 2, &[empty]).unwrap();
        assert_eq!(b2, cube_at_origin(16, 1).unwrap());
        // One resonant point near the corner inflates by one translate.
        let x = LatticeSet::singleton(LatticePoint::new(vec![20]).unwrap());
        let (b2, _) = build_block_from_sets(&schedule, 1, 2, &[x]).unwrap();
        let inner = cube_at_origin(16, 1).unwrap();
        let outer = cube_at_origin(16 + 50 * 4, 1).unwrap();
        assert!(inner.is_subset_of(&b2));
        assert!(b2.is_subset_of(&outer));
        assert!(b2.len() > inner.len());
    }

    #[test]
    fn build_block_probe_driven_in_regime() {
        // l_1 large enough that delta_1 = e^{-l_1^{2/3}} makes the probe
        // widths compatible with the separation the cascade needs.
        let params = golden_sawtooth(1e-8);
        let schedule = ScaleSchedule::practical(1e-8, 200, 1e-9, 2).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let (b2, log) = build_block(&oracle, 2, &ProbeConfig { theta_probes: 16 }).unwrap();
        assert!(!log.is_empty());
        let inner = cube_at_origin(40000, 1).unwrap();
        let outer = cube_at_origin(40000 + 50 * 200, 1).unwrap();
        assert!(inner.is_subset_of(&b2));
        assert!(b2.is_subset_of(&outer));
    }

    #[test]
    fn goodset_greens_zero_epsilon() {
        let params = golden_sawtooth(0.0);
        let schedule = ScaleSchedule::practical(0.0, 4, 0.05, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let set = cube_at_origin(5, 1).unwrap();
        let theta = 0.3;
        // Mid-gap energy at scale 0.
        let e = 0.5
            * (params.site_value(theta, Side::Right, &LatticePoint::origin(1).unwrap())
                + params.site_value(theta, Side::Right, &LatticePoint::new(vec![2]).unwrap()));
        let rep = verify_goodset_greens(&oracle, &set, 0, theta, Side::Right, e, e).unwrap();
        // Off-diagonals vanish exactly, so decay holds with zero margin.
        assert_eq!(rep.decay_margin, 0.0);
        assert!(rep.pairs_checked > 0);
    }

    #[test]
    fn resonant_set_left_limits_differ_at_jump_site() {
        // At theta = beta_x the site x carries v(0) = 0 on the right and
        // v(1-0) = 1 on the left; scale-0 resonance near E = 1 sees it only
        // through the left-limit scan.
        let params = golden_sawtooth(1e-3);
        let schedule = ScaleSchedule::practical(1e-3, 4, 1e-3, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let x = LatticePoint::new(vec![3]).unwrap();
        let beta = crate::quasiperiodic::frac(-params.freq.phase_shift(&x));
        let search = cube_at_origin(5, 1).unwrap();
        let near_one = resonant_set(&oracle, 0, beta, Side::Left, 1.0 - 1e-4, &search).unwrap();
        assert!(near_one.contains(&x));
        let right = resonant_set(&oracle, 0, beta, Side::Right, 1.0 - 1e-4, &search).unwrap();
        assert!(!right.contains(&x));
        let near_zero = resonant_set(&oracle, 0, beta, Side::Right, 1e-4, &search).unwrap();
        assert!(near_zero.contains(&x));
    }

    #[test]
    fn resonant_set_ublm_pole_site_never_resonant() {
        // theta = beta_p puts site p exactly on the unbounded potential's
        // pole: the scale-0 curve value there is an infinity sentinel, which
        // is evaluated (distance infinite), not skipped.
        let params = ModelParams::new(
            crate::quasiperiodic::PotentialSpec::maryland(),
            crate::quasiperiodic::FrequencySpec::golden(50),
            1e-3,
        );
        let schedule = ScaleSchedule::practical(1e-3, 4, 0.05, 1).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let x = LatticePoint::new(vec![2]).unwrap();
        let beta = crate::quasiperiodic::frac(-params.freq.phase_shift(&x));
        let search = cube_at_origin(4, 1).unwrap();
        let s0 = resonant_set(&oracle, 0, beta, Side::Right, 0.0, &search).unwrap();
        assert!(!s0.contains(&x));
    }

    #[test]
    fn next_block_minus_origin_is_good_in_regime() {
        // A genuinely in-regime two-scale configuration: l_1 = 120 makes
        // both separation premises hold, and the pivot-deleted next block is
        // 1-good for energies at the scale-1 curve, which is exactly what
        // the inductive root window needs.
        let params = golden_sawtooth(1e-10);
        let schedule = ScaleSchedule::practical(1e-10, 120, 1e-9, 2).unwrap();
        let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
        assert!(
            separation_premises(&params, &schedule, &hierarchy)
                .iter()
                .all(|b| *b),
            "the schedule should be fully in regime"
        );
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let theta = 0.3;
        let e1 = oracle.value(1, theta, Side::Right).unwrap();
        assert!(e1.in_regime);
        let b2o = hierarchy.block(2).remove(&LatticePoint::origin(1).unwrap());
        for offset in [-5e-9, 0.0, 5e-9] {
            let rep = classify(&oracle, &b2o, 1, theta, Side::Right, e1.value + offset).unwrap();
            assert!(rep.good, "B_2 minus origin not 1-good at offset {offset:e}");
        }
    }

    #[test]
    fn dilate_is_l1_neighborhood() {
        let b = LatticeSet::new(
            vec![
                LatticePoint::new(vec![0, 0]).unwrap(),
                LatticePoint::new(vec![3, 1]).unwrap(),
            ],
            2,
        )
        .unwrap();
        let d = dilate(&b, 2);
        for p in d.iter() {
            assert!(b.iter().any(|q| q.dist1(p) <= 2));
        }
        // Brute force over a generous box.
        let mut count = 0;
        for x in -3..=6 {
            for y in -3..=4 {
                let p = LatticePoint::new(vec![x, y]).unwrap();
                if b.iter().any(|q| q.dist1(&p) <= 2) {
                    count += 1;
                    assert!(d.contains(&p));
                }
            }
        }
        assert_eq!(d.len(), count);
    }
}
