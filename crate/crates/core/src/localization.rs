//! Finite-box localization diagnostics: eigenfunction decay-rate fits,
//! Poisson-formula consistency, the center-grouped spectral bound for the
//! time-evolution kernel, and the regularized-annulus probe.

use crate::error::{CoreError, Result};
use crate::lattice::{cube_at_origin, LatticePoint, LatticeSet};
use crate::msa::{self, GoodnessReport};
use crate::operator::{assemble, ModelParams};
use crate::quasiperiodic::Side;
use crate::rellich::CurveOracle;
use nalgebra::DMatrix;

/// Dense-solver budgets: sites per box (d = 1 chains stay cheap; higher
/// dimensions hit the O(n^3) wall earlier).
const MAX_BOX_SITES_1D: usize = 4000;
const MAX_BOX_SITES_ND: usize = 1700;
/// Rounding floor below which eigenvector entries carry no information.
const AMPLITUDE_FLOOR: f64 = 1e-14;

/// Full eigensystem of H_{Q_L}(theta) with per-eigenfunction centers
/// (argmax of |psi|, ties to the lexicographically smallest site).
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub box_set: LatticeSet,
    pub theta: f64,
    pub eigenvalues: Vec<f64>,
    /// Column s is the eigenvector of eigenvalues[s].
    pub eigenvectors: DMatrix<f64>,
    pub centers: Vec<LatticePoint>,
}

pub fn diagonalize_box(params: &ModelParams, l: i64, theta: f64) -> Result<EigenSystem> {
    let box_set = cube_at_origin(l, params.dim())?;
    diagonalize_set(params, &box_set, theta)
}

pub fn diagonalize_set(
    params: &ModelParams,
    box_set: &LatticeSet,
    theta: f64,
) -> Result<EigenSystem> {
    let budget = if box_set.dim() == 1 {
        MAX_BOX_SITES_1D
    } else {
        MAX_BOX_SITES_ND
    };
    if box_set.len() > budget {
        return Err(CoreError::Domain(format!(
            "box of {} sites exceeds the dense-solver budget of {budget}",
            box_set.len()
        )));
    }
    let op = assemble(params, box_set, theta, Side::Right)?;
    let spec = op.spectrum()?;
    let n = box_set.len();
    let mut centers = Vec::with_capacity(n);
    for s in 0..n {
        let col = spec.eigenvectors.column(s);
        let mut best = 0usize;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        centers.push(box_set.points()[best].clone());
    }
    Ok(EigenSystem {
        box_set: box_set.clone(),
        theta,
        eigenvalues: spec.eigenvalues.iter().cloned().collect(),
        eigenvectors: spec.eigenvectors.clone(),
        centers,
    })
}

/// Least-squares exponential decay fit of ln|psi| against the l^1 distance
/// from the center.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub samples_used: usize,
}

pub fn decay_profile(sys: &EigenSystem, s: usize) -> Result<DecayFit> {
    let col = sys.eigenvectors.column(s);
    let psi: Vec<f64> = col.iter().cloned().collect();
    decay_profile_of_vector(&sys.box_set, &psi, &sys.centers[s])
}

/// Fit a decay rate for an arbitrary vector on a lattice set. Samples below
/// the rounding floor are dropped, then the nearest 10% of the remaining
/// sites (the near field) are excluded.
pub fn decay_profile_of_vector(
    box_set: &LatticeSet,
    psi: &[f64],
    center: &LatticePoint,
) -> Result<DecayFit> {
    let mut pts: Vec<(i64, f64)> = box_set
        .iter()
        .zip(psi)
        .filter(|(_, a)| a.abs() > AMPLITUDE_FLOOR)
        .map(|(p, a)| (p.dist1(center), a.abs().ln()))
        .collect();
    pts.sort_by_key(|(d, _)| *d);
    let near_field = pts.len() / 10;
    let usable = &pts[near_field..];
    if usable.len() < 4 {
        return Err(CoreError::InsufficientDecaySamples {
            needed: 4,
            got: usable.len(),
        });
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|(d, _)| *d as f64).sum();
    let sy: f64 = usable.iter().map(|(_, y)| *y).sum();
    let sxx: f64 = usable.iter().map(|(d, _)| (*d as f64) * (*d as f64)).sum();
    let sxy: f64 = usable.iter().map(|(d, y)| (*d as f64) * y).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return Err(CoreError::InsufficientDecaySamples {
            needed: 4,
            got: usable.len(),
        });
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = usable
        .iter()
        .map(|(_, y)| (y - mean_y) * (y - mean_y))
        .sum();
    let ss_res: f64 = usable
        .iter()
        .map(|(d, y)| {
            let fit = intercept + slope * (*d as f64);
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(DecayFit {
        rate: -slope,
        prefactor: intercept.exp(),
        r_squared,
        samples_used: usable.len(),
    })
}

/// Residual of the Poisson boundary formula
/// psi(x) = -eps sum_{(w,w') in boundary(U)} G_U(x,w) psi(w')
/// for a vector psi on the enclosing set and an interior window U.
pub fn poisson_residual(
    params: &ModelParams,
    enclosing: &LatticeSet,
    psi: &[f64],
    e: f64,
    window: &LatticeSet,
    x: &LatticePoint,
    theta: f64,
) -> Result<f64> {
    if !window.contains(x) {
        return Err(CoreError::Domain("x must lie in the window".into()));
    }
    if !window.is_subset_of(enclosing) {
        return Err(CoreError::Domain(
            "window must be a subset of the enclosing set".into(),
        ));
    }
    if window.len() == enclosing.len() {
        return Err(CoreError::DegenerateSubset);
    }
    let op = assemble(params, window, theta, Side::Right)?;
    let g = op.greens(e)?;
    let boundary = window.boundaries(enclosing)?;
    let mut sum = 0.0;
    for pair in &boundary.pairs {
        let gi = g.entry(x, &pair.inner);
        let j = enclosing
            .index_of(&pair.outer)
            .expect("outer boundary point lies in the enclosing set");
        sum += gi * psi[j];
    }
    let xi = enclosing.index_of(x).expect("x lies in the enclosing set");
    Ok((psi[xi] - (-params.epsilon) * sum).abs())
}

/// Time-evolution kernel diagnostics for a site pair.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EdlKernel {
    /// max over the sampled times of |<e^{itH} e_x, e_y>|.
    pub sup_sampled: f64,
    /// sum_s |psi_s(x)| |psi_s(y)|: the middle term of the chain.
    pub sum_abs: f64,
    /// Center-grouped Cauchy-Schwarz bound, independent of t.
    pub spectral_bound: f64,
}

pub fn edl_kernel(
    sys: &EigenSystem,
    x: &LatticePoint,
    y: &LatticePoint,
    t_samples: &[f64],
) -> EdlKernel {
    let ix = sys.box_set.index_of(x).expect("x not in the box");
    let iy = sys.box_set.index_of(y).expect("y not in the box");
    let n = sys.eigenvalues.len();

    let mut sup_sampled = 0.0f64;
    for &t in t_samples {
        let mut re = 0.0;
        let mut im = 0.0;
        for s in 0..n {
            let a = sys.eigenvectors[(ix, s)] * sys.eigenvectors[(iy, s)];
            let phase = t * sys.eigenvalues[s];
            re += a * phase.cos();
            im += a * phase.sin();
        }
        sup_sampled = sup_sampled.max(re.hypot(im));
    }

    let mut sum_abs = 0.0;
    for s in 0..n {
        sum_abs += (sys.eigenvectors[(ix, s)] * sys.eigenvectors[(iy, s)]).abs();
    }

    // Group by center; the centers vector maps s -> p.
    use std::collections::HashMap;
    let mut groups: HashMap<&LatticePoint, (f64, f64)> = HashMap::new();
    for s in 0..n {
        let e = groups.entry(&sys.centers[s]).or_insert((0.0, 0.0));
        let ax = sys.eigenvectors[(ix, s)];
        let ay = sys.eigenvectors[(iy, s)];
        e.0 += ax * ax;
        e.1 += ay * ay;
    }
    // sqrt(a) sqrt(b) instead of sqrt(a b): the product can underflow even
    // when both factors are representable.
    let mut spectral_bound = 0.0;
    for (a, b) in groups.values() {
        spectral_bound += a.sqrt() * b.sqrt();
    }
    EdlKernel {
        sup_sampled,
        sum_abs,
        spectral_bound,
    }
}

/// Regularized annulus around the origin at scale n:
/// Q_{98 l_{n+1}} \ Q_{80 l_n}, then the regularization cascade. Reports the
/// goodness classification and whether the widened annulus avoided S_n.
pub fn annulus_probe(
    oracle: &CurveOracle,
    n: usize,
    theta: f64,
    e: f64,
) -> Result<(LatticeSet, GoodnessReport, bool)> {
    let schedule = oracle.schedule;
    assert!(n >= 1 && n < schedule.num_scales());
    let dim = oracle.params.dim();
    let outer = cube_at_origin(98 * schedule.length(n + 1) as i64, dim)?;
    let inner = cube_at_origin(80 * schedule.length(n) as i64, dim)?;
    let annulus = outer.difference(&inner);
    let regularized = msa::regularize(oracle, &annulus, n, theta, Side::Right, e)?;
    let report = msa::classify(oracle, &regularized, n, theta, Side::Right, e)?;
    // The no-resonance window of the surrounding region.
    let wide = cube_at_origin(99 * schedule.length(n + 1) as i64, dim)?
        .difference(&cube_at_origin(50 * schedule.length(n) as i64, dim)?);
    let sn = msa::resonant_set(oracle, n, theta, Side::Right, e, &wide)?;
    Ok((regularized, report, sn.is_empty()))
}
