//! Rellich curves E_n(theta): the distinguished eigenvalue of H_{B_n}(theta)
//! tracking v(theta) through the scales.
//!
//! Each scale is produced by a disk-local root find of the pivot Schur
//! complement centered at the previous scale's value. The curve inherits the
//! potential's Lipschitz monotonicity on continuity intervals with
//! non-negative jumps at the discontinuities beta_x = {-x . omega}; the
//! audits here measure exactly that.

use crate::error::{CoreError, Result};
use crate::lattice::{LatticePoint, LatticeSet};
use crate::linalg;
use crate::msa::{BlockHierarchy, ScaleSchedule};
use crate::operator::{assemble, DirichletOperator, ModelParams};
use crate::quasiperiodic::{frac, Side};
use crate::schur::{find_rellich_root, RootOptions};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Mutex;

/// A curve value with its regime flag: true when every scale so far had a
/// clean window (unique eigenvalue, derivative near 1, step within budget).
#[derive(Clone, Copy, Debug)]
pub struct OracleValue {
    pub value: f64,
    pub in_regime: bool,
}

/// Computes E_m(phase) on demand, memoized; shared read-only across parallel
/// sweeps.
pub struct CurveOracle<'a> {
    pub params: &'a ModelParams,
    pub schedule: &'a ScaleSchedule,
    pub hierarchy: &'a BlockHierarchy,
    cache: Mutex<HashMap<(usize, Side, u64), OracleValue>>,
}

impl<'a> CurveOracle<'a> {
    pub fn new(
        params: &'a ModelParams,
        schedule: &'a ScaleSchedule,
        hierarchy: &'a BlockHierarchy,
    ) -> Self {
        Self {
            params,
            schedule,
            hierarchy,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// E_m at the given phase; side selects the left-limit operator chain.
    pub fn value(&self, scale: usize, phase: f64, side: Side) -> Result<OracleValue> {
        let phase = canonical_phase(phase);
        if scale == 0 {
            return Ok(OracleValue {
                value: self.params.potential.eval(phase, side),
                in_regime: true,
            });
        }
        let key = (scale, side, phase.to_bits());
        if let Some(v) = self.cache.lock().expect("oracle cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = self.compute(scale, phase, side)?;
        self.cache
            .lock()
            .expect("oracle cache poisoned")
            .insert(key, v);
        Ok(v)
    }

    fn compute(&self, scale: usize, phase: f64, side: Side) -> Result<OracleValue> {
        let prev = self.value(scale - 1, phase, side)?;
        if !prev.value.is_finite() {
            // Unbounded potential at a period endpoint: the curve escapes to
            // the same infinity at every scale.
            return Ok(OracleValue {
                value: prev.value,
                in_regime: false,
            });
        }
        if self.params.epsilon == 0.0 {
            // Zero hopping: the complement is exactly z - v(theta) at every
            // scale, so the curve never leaves the potential.
            return Ok(prev);
        }
        let block = self.hierarchy.block(scale);
        let op = assemble(self.params, block, phase, side)?;
        let radius = self.schedule.search_radius(scale);
        let origin = LatticePoint::origin(block.dim())?;
        let opts = RootOptions {
            derivative_budget: self.schedule.tolerance_budget[scale - 1].min(0.5),
            max_iterations: 100,
        };
        match find_rellich_root(&op, &origin, prev.value, radius, &opts) {
            Ok(r) => {
                let budget = self.schedule.resonance_budget(scale);
                let in_regime =
                    prev.in_regime && r.derivative_ok && (r.root - prev.value).abs() <= budget;
                Ok(OracleValue {
                    value: r.root,
                    in_regime,
                })
            }
            Err(CoreError::RootCountMismatch { .. }) | Err(CoreError::SingularMinor) => {
                // The disk-local window is dirty at this phase; fall back to
                // the nearest eigenvalue and record the regime violation.
                let value = nearest_eigenvalue(&op, prev.value)?;
                Ok(OracleValue {
                    value,
                    in_regime: false,
                })
            }
            Err(e) => Err(e),
        }
    }
}

fn canonical_phase(phase: f64) -> f64 {
    // Reduction keeps cache keys canonical; the left limit at an integer
    // phase is the potential's own business (frac(1.0) = 0 and eval(0, Left)
    // is the top-of-cell value).
    frac(phase)
}

fn nearest_eigenvalue(op: &DirichletOperator, center: f64) -> Result<f64> {
    let s = op.spectrum()?;
    Ok(s.eigenvalues
        .iter()
        .cloned()
        .min_by(|a, b| {
            (a - center)
                .abs()
                .partial_cmp(&(b - center).abs())
                .expect("finite eigenvalues")
        })
        .expect("nonempty spectrum"))
}

/// Sorted eigenvalue branches of H_{B}(theta) over a grid.
#[derive(Clone, Debug)]
pub struct BranchFamily {
    pub theta_grid: Vec<f64>,
    /// lambda[sample][i], non-decreasing in i.
    pub lambda: Vec<Vec<f64>>,
    pub block: LatticeSet,
}

pub fn branch_family(
    params: &ModelParams,
    block: &LatticeSet,
    theta_grid: &[f64],
) -> Result<BranchFamily> {
    let lambda: Result<Vec<Vec<f64>>> = theta_grid
        .par_iter()
        .map(|theta| {
            let op = assemble(params, block, *theta, Side::Right)?;
            let s = op.spectrum()?;
            Ok(s.eigenvalues.iter().cloned().collect())
        })
        .collect();
    Ok(BranchFamily {
        theta_grid: theta_grid.to_vec(),
        lambda: lambda?,
        block: block.clone(),
    })
}

/// Theta grid recipe: uniform samples plus two-sided insertions at every
/// discontinuity.
#[derive(Clone, Debug)]
pub struct ThetaGridSpec {
    pub samples: usize,
    pub insert_discontinuities: bool,
    /// Distance of the inserted samples from each discontinuity; also the
    /// exclusion margin around poles for unbounded potentials.
    pub offset: f64,
}

impl Default for ThetaGridSpec {
    fn default() -> Self {
        Self {
            samples: 4096,
            insert_discontinuities: true,
            offset: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CurveSample {
    pub theta: f64,
    /// E_0..E_n at this theta (right-side construction).
    pub values: Vec<f64>,
    pub in_regime: bool,
    pub issue: Option<String>,
}

#[derive(Clone, Debug)]
pub struct JumpRecord {
    pub alpha: f64,
    pub site: LatticePoint,
    /// Left-limit value: the side = Left root chain for bounded potentials,
    /// the grid extrapolation for unbounded ones.
    pub left_limit: f64,
    pub right_value: f64,
    pub left_extrapolated: f64,
    pub right_extrapolated: f64,
    /// right_value - left_limit.
    pub jump: f64,
    /// |left_limit - left_extrapolated|: agreement of the two left-limit
    /// routes (bounded potentials only; zero otherwise).
    pub extrapolation_gap: f64,
}

#[derive(Clone, Debug)]
pub struct RellichCurve {
    pub scale_n: usize,
    pub block: LatticeSet,
    /// Samples in ascending theta order.
    pub samples: Vec<CurveSample>,
    /// (beta_x, x) sorted by beta, deduplicated.
    pub discontinuities: Vec<(f64, LatticePoint)>,
    pub jump_records: Vec<JumpRecord>,
}

impl RellichCurve {
    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.theta)
    }

    /// Top-scale values.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(move |s| s.values[self.scale_n])
    }

    /// Index of the continuity interval [alpha_k, alpha_{k+1}) containing
    /// theta.
    pub fn interval_index(&self, theta: f64) -> usize {
        self.discontinuities
            .partition_point(|(beta, _)| *beta <= theta)
    }
}

/// Inductive curve construction over a theta grid. Per-sample window
/// failures are recorded in the sample, never fatal.
pub fn construct_curve(
    oracle: &CurveOracle,
    n: usize,
    grid: &ThetaGridSpec,
) -> Result<RellichCurve> {
    assert!(n <= oracle.schedule.num_scales());
    let block = oracle.hierarchy.block(n).clone();
    let unbounded = oracle.params.potential.is_unbounded();

    let mut discontinuities: Vec<(f64, LatticePoint)> = block
        .iter()
        .map(|x| (frac(-oracle.params.freq.phase_shift(x)), x.clone()))
        .collect();
    discontinuities.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite betas"));
    discontinuities.dedup_by(|a, b| a.0 == b.0);

    let mut thetas: Vec<f64> = (0..grid.samples)
        .map(|i| i as f64 / grid.samples as f64)
        .collect();
    if grid.insert_discontinuities {
        for (beta, _) in &discontinuities {
            thetas.push(frac(beta - grid.offset));
            let above = beta + grid.offset;
            if above < 1.0 {
                thetas.push(above);
            }
            if !unbounded {
                thetas.push(*beta);
            }
        }
    }
    if unbounded {
        // Drop samples inside the pole margin of any discontinuity (and the
        // period endpoints, covered by beta_o = 0).
        thetas.retain(|t| {
            *t > 0.0
                && discontinuities.iter().all(|(beta, _)| {
                    (t - beta).abs() >= grid.offset
                        || t == &(beta + grid.offset)
                        || t == &(beta - grid.offset)
                })
        });
    }
    thetas.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    thetas.dedup();

    let samples: Vec<CurveSample> = thetas
        .par_iter()
        .map(|theta| evaluate_sample(oracle, n, *theta))
        .collect();

    let jump_records = jump_records(oracle, n, &discontinuities, &samples, unbounded)?;
    Ok(RellichCurve {
        scale_n: n,
        block,
        samples,
        discontinuities,
        jump_records,
    })
}

fn evaluate_sample(oracle: &CurveOracle, n: usize, theta: f64) -> CurveSample {
    let mut values = Vec::with_capacity(n + 1);
    let mut in_regime = true;
    let mut issue = None;
    for m in 0..=n {
        match oracle.value(m, theta, Side::Right) {
            Ok(v) => {
                values.push(v.value);
                in_regime &= v.in_regime;
            }
            Err(e) => {
                issue = Some(e.to_string());
                in_regime = false;
                values.resize(n + 1, f64::NAN);
                break;
            }
        }
    }
    CurveSample {
        theta,
        values,
        in_regime,
        issue,
    }
}

/// Linear extrapolation of the top-scale value to `target` from the nearest
/// valid samples strictly on one side. `below` selects the side.
fn extrapolate(samples: &[CurveSample], n: usize, target: f64, below: bool) -> Option<f64> {
    let usable = |s: &&CurveSample| s.issue.is_none() && s.values[n].is_finite();
    let mut picked: Vec<(f64, f64)> = if below {
        samples
            .iter()
            .rev()
            .filter(|s| s.theta < target)
            .filter(usable)
            .take(2)
            .map(|s| (s.theta, s.values[n]))
            .collect()
    } else {
        samples
            .iter()
            .filter(|s| s.theta > target)
            .filter(usable)
            .take(2)
            .map(|s| (s.theta, s.values[n]))
            .collect()
    };
    match picked.len() {
        0 => None,
        1 => Some(picked[0].1),
        _ => {
            picked.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
            let (t1, e1) = picked[0];
            let (t2, e2) = picked[1];
            if t2 == t1 {
                return Some(e2);
            }
            let slope = (e2 - e1) / (t2 - t1);
            Some(if below {
                e2 + slope * (target - t2)
            } else {
                e1 + slope * (target - t1)
            })
        }
    }
}

fn jump_records(
    oracle: &CurveOracle,
    n: usize,
    discontinuities: &[(f64, LatticePoint)],
    samples: &[CurveSample],
    unbounded: bool,
) -> Result<Vec<JumpRecord>> {
    let mut out = Vec::with_capacity(discontinuities.len());
    for (beta, x) in discontinuities {
        let is_origin = x.norm1() == 0;
        if unbounded && is_origin {
            // The period endpoint of an unbounded potential: both one-sided
            // limits diverge, nothing finite to record.
            continue;
        }
        // Extrapolated limits; the left limit at beta = 0 wraps to 1.
        let left_target = if *beta == 0.0 { 1.0 } else { *beta };
        let left_extrapolated = extrapolate(samples, n, left_target, true).unwrap_or(f64::NAN);
        let right_extrapolated = extrapolate(samples, n, *beta, false).unwrap_or(f64::NAN);
        let (left_limit, right_value, extrapolation_gap) = if unbounded {
            (left_extrapolated, right_extrapolated, 0.0)
        } else {
            let right = oracle.value(n, *beta, Side::Right)?.value;
            let left = oracle.value(n, left_target, Side::Left)?.value;
            (left, right, (left - left_extrapolated).abs())
        };
        out.push(JumpRecord {
            alpha: *beta,
            site: x.clone(),
            left_limit,
            right_value,
            left_extrapolated,
            right_extrapolated,
            jump: right_value - left_limit,
            extrapolation_gap,
        });
    }
    Ok(out)
}

/// Monotonicity audit: per-interval difference quotients against the
/// Lipschitz constant and interior jump signs.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MonotonicityReport {
    pub min_quotient: f64,
    pub quotient_ok: bool,
    /// Theta of the left endpoint of the first violating pair, if any.
    pub first_violation: Option<f64>,
    /// Minimal difference quotient per continuity interval, keyed by the
    /// interval index (intervals without two usable samples are absent).
    pub per_interval_min: Vec<(usize, f64)>,
    /// Minimum jump over interior discontinuities (alpha != 0).
    pub min_interior_jump: f64,
    pub jumps_ok: bool,
    pub uniform_ok: bool,
    pub slack: f64,
    pub jump_tol: f64,
}

pub fn audit_monotonicity(curve: &RellichCurve, lipschitz_l: f64) -> MonotonicityReport {
    let slack = 1e-6;
    let n = curve.scale_n;
    let mut min_quotient = f64::INFINITY;
    let mut first_violation = None;
    let mut per_interval: HashMap<usize, f64> = HashMap::new();
    for pair in curve.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.issue.is_some() || b.issue.is_some() {
            continue;
        }
        let interval = curve.interval_index(a.theta);
        if interval != curve.interval_index(b.theta) {
            continue;
        }
        let dt = b.theta - a.theta;
        if dt <= 0.0 {
            continue;
        }
        let q = (b.values[n] - a.values[n]) / dt;
        if q < min_quotient {
            min_quotient = q;
        }
        per_interval
            .entry(interval)
            .and_modify(|m| *m = m.min(q))
            .or_insert(q);
        if q < lipschitz_l - slack && first_violation.is_none() {
            first_violation = Some(a.theta);
        }
    }
    let mut per_interval_min: Vec<(usize, f64)> = per_interval.into_iter().collect();
    per_interval_min.sort_by_key(|(k, _)| *k);
    let mut min_interior_jump = f64::INFINITY;
    let mut jump_tol = 0.0f64;
    for r in &curve.jump_records {
        if r.alpha == 0.0 {
            continue;
        }
        min_interior_jump = min_interior_jump.min(r.jump);
        jump_tol = jump_tol.max(1e-10 * r.right_value.abs().max(1.0));
    }
    if curve.jump_records.iter().all(|r| r.alpha == 0.0) {
        min_interior_jump = 0.0;
    }
    let quotient_ok = min_quotient >= lipschitz_l - slack;
    let jumps_ok = min_interior_jump >= -jump_tol;
    MonotonicityReport {
        min_quotient,
        quotient_ok,
        first_violation,
        per_interval_min,
        min_interior_jump,
        jumps_ok,
        uniform_ok: quotient_ok && jumps_ok,
        slack,
        jump_tol,
    }
}

/// Two-sided continuity report at the discontinuities of an unbounded-class
/// curve: the curve must have equal one-sided limits at every beta_x, x != o.
#[derive(Clone, Debug, serde::Serialize)]
pub struct UblmContinuityReport {
    /// (beta, site coords, |right - left|, tolerance).
    pub per_site: Vec<(f64, Vec<i64>, f64, f64)>,
    pub max_discrepancy: f64,
    pub ok: bool,
}

pub fn ublm_continuity_check(
    oracle: &CurveOracle,
    curve: &RellichCurve,
    grid: &ThetaGridSpec,
) -> Result<UblmContinuityReport> {
    if !oracle.params.potential.is_unbounded() {
        return Err(CoreError::UnsupportedRegime {
            required: "unbounded Lipschitz monotone",
        });
    }
    let n = curve.scale_n;
    let mut per_site = Vec::new();
    let mut max_discrepancy = 0.0f64;
    let mut all_ok = true;
    for r in &curve.jump_records {
        if r.site.norm1() == 0 {
            continue;
        }
        let discrepancy = (r.right_extrapolated - r.left_extrapolated).abs();
        // Local slope from the nearest samples bounds the extrapolation
        // error at the insertion offset.
        let slope = local_slope(curve, n, r.alpha).max(oracle.params.potential.lipschitz_l);
        let tol = (10.0 * grid.offset * slope).max(1e-12);
        per_site.push((r.alpha, r.site.coords().to_vec(), discrepancy, tol));
        max_discrepancy = max_discrepancy.max(discrepancy);
        all_ok &= discrepancy <= tol;
    }
    Ok(UblmContinuityReport {
        per_site,
        max_discrepancy,
        ok: all_ok,
    })
}

fn local_slope(curve: &RellichCurve, n: usize, beta: f64) -> f64 {
    let mut best = 0.0f64;
    for pair in curve.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.issue.is_some() || b.issue.is_some() {
            continue;
        }
        if (a.theta - beta).abs() > 0.01 && (b.theta - beta).abs() > 0.01 {
            continue;
        }
        let dt = b.theta - a.theta;
        if dt > 0.0 && curve.interval_index(a.theta) == curve.interval_index(b.theta) {
            best = best.max(((b.values[n] - a.values[n]) / dt).abs());
        }
    }
    best
}

/// Sorted-branch index of `value` in the spectrum of H_{B_m}(theta): the
/// number of eigenvalues strictly below it (evaluated just under the value
/// so a root matching an eigenvalue lands on its own index).
pub fn branch_index(
    params: &ModelParams,
    hierarchy: &BlockHierarchy,
    m: usize,
    theta: f64,
    side: Side,
    value: f64,
) -> Result<usize> {
    let op = assemble(params, hierarchy.block(m), theta, side)?;
    let probe = value - 1e-9 * value.abs().max(1.0);
    if let Some(t) = op.tridiag() {
        return Ok(linalg::sturm_count_below(t, probe));
    }
    let s = op.spectrum()?;
    Ok(s.eigenvalues.iter().filter(|v| **v < probe).count())
}
