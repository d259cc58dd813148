//! Dirichlet restrictions H_Λ(θ) and H_Λ(θ-0), their spectra, Green's
//! functions, and the Neumann-series bounds for nonresonant sets.

use crate::error::{CoreError, Result};
use crate::lattice::{LatticePoint, LatticeSet};
use crate::linalg::{self, Tridiag, C64};
use crate::quasiperiodic::{FrequencySpec, PotentialSpec, Side};
use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;

/// The model: potential family, frequency and hopping strength.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub potential: PotentialSpec,
    pub freq: FrequencySpec,
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(potential: PotentialSpec, freq: FrequencySpec, epsilon: f64) -> Self {
        Self {
            potential,
            freq,
            epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        self.freq.dim()
    }

    /// Initial decay rate: half the log of the hopping strength; +inf at
    /// epsilon = 0 (all off-diagonal Green entries vanish exactly).
    pub fn gamma0(&self) -> f64 {
        if self.epsilon == 0.0 {
            f64::INFINITY
        } else {
            0.5 * self.epsilon.ln().abs()
        }
    }

    /// v(theta + x . omega) with the requested one-sided limit.
    pub fn site_value(&self, theta: f64, side: Side, x: &LatticePoint) -> f64 {
        self.potential.eval(theta + self.freq.phase_shift(x), side)
    }
}

/// e^{-gamma d} with the conventions for the epsilon = 0 sentinel.
pub fn decay_bound(gamma: f64, dist: i64) -> f64 {
    if dist <= 0 {
        1.0
    } else if gamma.is_infinite() {
        0.0
    } else {
        (-gamma * dist as f64).exp()
    }
}

/// Sorted eigenvalues with matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// A Dirichlet restriction of the operator on a finite lattice set, stored
/// as a dense real symmetric matrix in the set's deterministic ordering.
#[derive(Debug)]
pub struct DirichletOperator {
    pub domain: LatticeSet,
    pub theta: f64,
    pub side: Side,
    pub epsilon: f64,
    matrix: DMatrix<f64>,
    tridiag: Option<Tridiag>,
    spectrum: OnceLock<Spectrum>,
}

impl Clone for DirichletOperator {
    fn clone(&self) -> Self {
        Self {
            domain: self.domain.clone(),
            theta: self.theta,
            side: self.side,
            epsilon: self.epsilon,
            matrix: self.matrix.clone(),
            tridiag: self.tridiag.clone(),
            spectrum: OnceLock::new(),
        }
    }
}

/// Assemble H_Λ(θ) (side = Right) or H_Λ(θ-0) (side = Left).
pub fn assemble(
    params: &ModelParams,
    domain: &LatticeSet,
    theta: f64,
    side: Side,
) -> Result<DirichletOperator> {
    if domain.is_empty() {
        return Err(CoreError::Domain("cannot assemble on an empty set".into()));
    }
    if domain.dim() != params.dim() {
        return Err(CoreError::Domain(format!(
            "domain dimension {} does not match frequency dimension {}",
            domain.dim(),
            params.dim()
        )));
    }
    let n = domain.len();
    let mut diag = Vec::with_capacity(n);
    let mut poles = Vec::new();
    for x in domain.iter() {
        let v = params.site_value(theta, side, x);
        if !v.is_finite() {
            poles.push(x.coords().to_vec());
        }
        diag.push(v);
    }
    if !poles.is_empty() {
        return Err(CoreError::PoleOnLattice {
            theta,
            sites: poles,
        });
    }

    let mut matrix = DMatrix::zeros(n, n);
    for (i, x) in domain.iter().enumerate() {
        matrix[(i, i)] = diag[i];
        if params.epsilon != 0.0 {
            for y in x.neighbors() {
                if let Some(j) = domain.index_of(&y) {
                    matrix[(i, j)] = params.epsilon;
                }
            }
        }
    }
    let tridiag = linalg::tridiag_of(&matrix);
    Ok(DirichletOperator {
        domain: domain.clone(),
        theta,
        side,
        epsilon: params.epsilon,
        matrix,
        tridiag,
        spectrum: OnceLock::new(),
    })
}

impl DirichletOperator {
    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn tridiag(&self) -> Option<&Tridiag> {
        self.tridiag.as_ref()
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.matrix[(i, i)]
    }

    /// Max-norm of the matrix entries; used to scale residual tolerances.
    pub fn entry_scale(&self) -> f64 {
        self.matrix.amax().max(1.0)
    }

    /// Sorted eigenvalues and orthonormal eigenvectors, computed once.
    pub fn spectrum(&self) -> Result<&Spectrum> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let (eigenvalues, eigenvectors) = linalg::sym_eigen_sorted(&self.matrix)?;
        let _ = self.spectrum.set(Spectrum {
            eigenvalues,
            eigenvectors,
        });
        Ok(self.spectrum.get().expect("just set"))
    }

    /// Number of eigenvalues in the closed interval [a, b]; Sturm counting in
    /// the tridiagonal case, otherwise from the cached dense spectrum.
    pub fn eig_count_in(&self, a: f64, b: f64) -> Result<usize> {
        if let Some(t) = &self.tridiag {
            let below_b = linalg::sturm_count_below(t, b.next_up());
            let below_a = linalg::sturm_count_below(t, a);
            return Ok(below_b - below_a);
        }
        let s = self.spectrum()?;
        Ok(s.eigenvalues
            .iter()
            .filter(|v| **v >= a && **v <= b)
            .count())
    }

    /// Distance from E to the spectrum.
    pub fn spectral_dist(&self, e: f64) -> Result<f64> {
        let s = self.spectrum()?;
        Ok(s.eigenvalues
            .iter()
            .map(|v| (v - e).abs())
            .fold(f64::INFINITY, f64::min))
    }

    /// Green's function at a real off-spectrum energy: full entry table plus
    /// an operator norm computed from the table itself (so the norm identity
    /// against 1/dist(Spec, E*) is a genuine two-route check).
    pub fn greens(&self, e_star: f64) -> Result<GreensFunction> {
        let dist = self.spectral_dist(e_star)?;
        if dist <= 1e-12 * self.entry_scale() {
            return Err(CoreError::SingularEnergy {
                energy: e_star,
                dist,
            });
        }
        let n = self.len();
        let shifted = &self.matrix - DMatrix::identity(n, n) * e_star;
        let lu = shifted.clone().lu();
        let entries = lu
            .solve(&DMatrix::identity(n, n))
            .ok_or(CoreError::SingularEnergy {
                energy: e_star,
                dist,
            })?;
        let op_norm = linalg::sym_spectral_norm(&entries)?;
        let residual = (&shifted * &entries - DMatrix::identity(n, n)).amax();
        Ok(GreensFunction {
            domain: self.domain.clone(),
            e_star: C64::new(e_star, 0.0),
            entries,
            op_norm,
            residual,
        })
    }

    /// Complex-energy resolvent entries (z - H)^{-1}; only the Schur-complement
    /// machinery needs these, so no norm bookkeeping is done here.
    pub fn resolvent_complex(&self, z: C64) -> Result<DMatrix<C64>> {
        let n = self.len();
        let shifted = DMatrix::from_fn(n, n, |i, j| {
            let h = self.matrix[(i, j)];
            if i == j {
                z - C64::new(h, 0.0)
            } else {
                C64::new(-h, 0.0)
            }
        });
        shifted
            .lu()
            .solve(&DMatrix::identity(n, n))
            .ok_or(CoreError::SingularMinor)
    }
}

/// G_Λ^{θ,E*} with its entry table, norm, and the inversion residual.
#[derive(Clone, Debug)]
pub struct GreensFunction {
    pub domain: LatticeSet,
    pub e_star: C64,
    pub entries: DMatrix<f64>,
    pub op_norm: f64,
    pub residual: f64,
}

impl GreensFunction {
    pub fn entry(&self, x: &LatticePoint, y: &LatticePoint) -> f64 {
        let i = self.domain.index_of(x).expect("x not in domain");
        let j = self.domain.index_of(y).expect("y not in domain");
        self.entries[(i, j)]
    }
}

/// Outcome of the Neumann-series bound check for 0-nonresonant sets:
/// premise status, both bounds, and the worst margins.
#[derive(Clone, Debug, serde::Serialize)]
pub struct NonresonantReport {
    pub premise_ok: bool,
    /// Sites violating |v(theta + x.omega) - E| >= delta0.
    pub resonant_sites: Vec<Vec<i64>>,
    pub energy_gap_ok: bool,
    pub norm_ok: bool,
    /// ||G|| / (10/delta0); bound holds iff <= 1.
    pub norm_margin: f64,
    pub decay_ok: bool,
    /// max over pairs of |G(x,y)| / e^{-gamma0 ||x-y||}; holds iff <= 1.
    pub decay_margin: f64,
}

/// Check the 0-nonresonant Green's bounds: ||G|| <= 10/delta0 and
/// |G(x,y)| <= e^{-gamma0 ||x-y||_1} for ||x-y||_1 >= 1, re-verifying the
/// premises Λ ∩ S_0(θ,E) = ∅ and |E - E*| < delta0/5.
pub fn check_nonresonant_bounds(
    params: &ModelParams,
    op: &DirichletOperator,
    e: f64,
    e_star: f64,
    delta0: f64,
    gamma0: f64,
) -> Result<NonresonantReport> {
    let mut resonant_sites = Vec::new();
    for x in op.domain.iter() {
        let v = params.site_value(op.theta, op.side, x);
        if (v - e).abs() < delta0 {
            resonant_sites.push(x.coords().to_vec());
        }
    }
    let energy_gap_ok = (e - e_star).abs() < delta0 / 5.0;
    let premise_ok = resonant_sites.is_empty() && energy_gap_ok;

    let g = op.greens(e_star)?;
    let norm_margin = g.op_norm / (10.0 / delta0);
    let norm_ok = norm_margin <= 1.0;

    let mut decay_margin: f64 = 0.0;
    let pts = op.domain.points();
    for (i, x) in pts.iter().enumerate() {
        for (j, y) in pts.iter().enumerate().skip(i + 1) {
            let dist = x.dist1(y);
            debug_assert!(dist >= 1);
            let bound = decay_bound(gamma0, dist);
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
    let decay_ok = decay_margin <= 1.0;
    Ok(NonresonantReport {
        premise_ok,
        resonant_sites,
        energy_gap_ok,
        norm_ok,
        norm_margin,
        decay_ok,
        decay_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cube, cube_at_origin};
    use crate::quasiperiodic::frac;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn sawtooth_model(epsilon: f64) -> ModelParams {
        ModelParams::new(
            PotentialSpec::sawtooth(),
            FrequencySpec::golden(50),
            epsilon,
        )
    }

    fn pt(coords: &[i64]) -> LatticePoint {
        LatticePoint::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn single_site_matrix() {
        let params = sawtooth_model(0.0);
        let dom = LatticeSet::singleton(pt(&[0]));
        let op = assemble(&params, &dom, 0.3, Side::Right).unwrap();
        assert_eq!(op.matrix()[(0, 0)], 0.3);
        assert_eq!(op.len(), 1);
    }

    #[test]
    fn two_site_matrix_layout() {
        let params = sawtooth_model(0.1);
        let dom = LatticeSet::new(vec![pt(&[0]), pt(&[1])], 1).unwrap();
        let theta = 0.2;
        let op = assemble(&params, &dom, theta, Side::Right).unwrap();
        let omega = params.freq.omega[0];
        assert_abs_diff_eq!(op.matrix()[(0, 0)], frac(theta), epsilon = 1e-15);
        assert_abs_diff_eq!(op.matrix()[(1, 1)], frac(theta + omega), epsilon = 1e-15);
        assert_eq!(op.matrix()[(0, 1)], 0.1);
        assert_eq!(op.matrix()[(1, 0)], 0.1);
    }

    #[test]
    fn rank_one_jump_law_sawtooth() {
        // H(beta_x) - H(beta_x - 0) = -e_x e_x^T exactly, 100 random x != o.
        let params = sawtooth_model(1e-3);
        let block = cube_at_origin(6, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut tested = 0;
        while tested < 100 {
            let c = rng.gen_range(-6i64..=6);
            if c == 0 {
                continue;
            }
            let x = pt(&[c]);
            let beta = frac(-params.freq.phase_shift(&x));
            let right = assemble(&params, &block, beta, Side::Right).unwrap();
            let left = assemble(&params, &block, beta, Side::Left).unwrap();
            let diff = right.matrix() - left.matrix();
            let k = block.index_of(&x).unwrap();
            for i in 0..block.len() {
                for j in 0..block.len() {
                    let expect = if i == k && j == k { -1.0 } else { 0.0 };
                    assert_eq!(diff[(i, j)], expect, "x={c} i={i} j={j}");
                }
            }
            tested += 1;
        }
    }

    #[test]
    fn ublm_pole_detection() {
        let params = ModelParams::new(PotentialSpec::maryland(), FrequencySpec::golden(50), 1e-3);
        let block = cube_at_origin(2, 1).unwrap();
        // theta = beta_1 puts site 1 exactly on the pole.
        let x = pt(&[1]);
        let beta = frac(-params.freq.phase_shift(&x));
        match assemble(&params, &block, beta, Side::Right) {
            Err(CoreError::PoleOnLattice { sites, .. }) => {
                assert_eq!(sites, vec![vec![1]]);
            }
            other => panic!("expected PoleOnLattice, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn spectrum_of_diagonal_operator() {
        let params = sawtooth_model(0.0);
        let block = cube_at_origin(5, 1).unwrap();
        let op = assemble(&params, &block, 0.37, Side::Right).unwrap();
        let s = op.spectrum().unwrap();
        let mut diag: Vec<f64> = (0..op.len()).map(|i| op.diagonal(i)).collect();
        diag.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, d) in diag.iter().enumerate() {
            assert_abs_diff_eq!(s.eigenvalues[i], *d, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let params = sawtooth_model(0.07);
        let dom = LatticeSet::new(vec![pt(&[0]), pt(&[1])], 1).unwrap();
        let op = assemble(&params, &dom, 0.11, Side::Right).unwrap();
        let a = op.diagonal(0);
        let b = op.diagonal(1);
        let eps = 0.07f64;
        let mid = 0.5 * (a + b);
        let rad = (0.25 * (a - b) * (a - b) + eps * eps).sqrt();
        let s = op.spectrum().unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], mid - rad, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[1], mid + rad, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_is_one_periodic() {
        let params = sawtooth_model(0.05);
        let block = cube_at_origin(4, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let theta: f64 = rng.gen_range(0.0..1.0);
            let a = assemble(&params, &block, theta, Side::Right).unwrap();
            let b = assemble(&params, &block, theta + 1.0, Side::Right).unwrap();
            let sa = a.spectrum().unwrap();
            let sb = b.spectrum().unwrap();
            for i in 0..block.len() {
                assert_abs_diff_eq!(sa.eigenvalues[i], sb.eigenvalues[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn minmax_lipschitz_bound_on_sorted_eigenvalues() {
        // Within one continuity interval of all site phases, sorted
        // eigenvalues move at least as fast as L (theta2 - theta1).
        let params = sawtooth_model(0.02);
        let block = cube_at_origin(3, 1).unwrap();
        let mut betas: Vec<f64> = block
            .iter()
            .map(|x| frac(-params.freq.phase_shift(x)))
            .collect();
        betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        betas.push(1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut pairs = 0;
        while pairs < 300 {
            let t1: f64 = rng.gen_range(0.0..1.0);
            let k = betas.partition_point(|b| *b <= t1);
            let hi = betas[k];
            if hi - t1 < 1e-6 {
                continue;
            }
            let t2 = rng.gen_range(t1..hi);
            let a = assemble(&params, &block, t1, Side::Right).unwrap();
            let b = assemble(&params, &block, t2, Side::Right).unwrap();
            let sa = a.spectrum().unwrap();
            let sb = b.spectrum().unwrap();
            for i in 0..block.len() {
                assert!(
                    sb.eigenvalues[i] - sa.eigenvalues[i] >= 1.0 * (t2 - t1) - 1e-9,
                    "branch {i} moved too slowly on [{t1}, {t2}]"
                );
            }
            pairs += 1;
        }
    }

    #[test]
    fn greens_single_site() {
        let params = sawtooth_model(0.0);
        let dom = LatticeSet::singleton(pt(&[0]));
        let op = assemble(&params, &dom, 0.3, Side::Right).unwrap();
        let g = op.greens(0.0).unwrap();
        assert_abs_diff_eq!(g.entries[(0, 0)], 1.0 / 0.3, epsilon = 1e-12);
    }

    #[test]
    fn greens_norm_identity_and_residual() {
        let params = sawtooth_model(0.01);
        let block = cube_at_origin(6, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let theta: f64 = rng.gen_range(0.0..1.0);
            let op = assemble(&params, &block, theta, Side::Right).unwrap();
            let e_star = 1.7 + rng.gen_range(0.0..0.3); // above the band
            let g = op.greens(e_star).unwrap();
            let dist = op.spectral_dist(e_star).unwrap();
            assert_abs_diff_eq!(g.op_norm * dist, 1.0, epsilon = 1e-8);
            assert!(g.residual <= 1e-10 * (1.0 + g.op_norm));
        }
    }

    #[test]
    fn greens_singular_energy_rejected() {
        let params = sawtooth_model(0.01);
        let block = cube_at_origin(3, 1).unwrap();
        let op = assemble(&params, &block, 0.4, Side::Right).unwrap();
        let ev = op.spectrum().unwrap().eigenvalues[2];
        match op.greens(ev) {
            Err(CoreError::SingularEnergy { .. }) => {}
            other => panic!("expected SingularEnergy, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn greens_zero_epsilon_offdiagonals_exactly_zero() {
        let params = sawtooth_model(0.0);
        let block = cube_at_origin(5, 1).unwrap();
        let op = assemble(&params, &block, 0.23, Side::Right).unwrap();
        let g = op.greens(2.0).unwrap();
        for i in 0..block.len() {
            for j in 0..block.len() {
                if i != j {
                    assert_eq!(g.entries[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn nonresonant_bounds_hold_for_diagonal_case() {
        let params = sawtooth_model(0.0);
        let block = cube_at_origin(4, 1).unwrap();
        let op = assemble(&params, &block, 0.3, Side::Right).unwrap();
        // E = 10 is far outside the sawtooth range, so S_0 is empty.
        let rep =
            check_nonresonant_bounds(&params, &op, 10.0, 10.0, 1e-2, params.gamma0()).unwrap();
        assert!(rep.premise_ok);
        assert!(rep.norm_ok);
        assert!(rep.decay_ok);
        assert_eq!(rep.decay_margin, 0.0);
    }

    #[test]
    fn nonresonant_bounds_hold_in_regime() {
        let params = sawtooth_model(1e-4);
        let block = cube_at_origin(8, 1).unwrap();
        let delta0 = 1e-2;
        let op = assemble(&params, &block, 0.3, Side::Right).unwrap();
        // Pick E in a gap of the diagonal values, at distance >= delta0.
        let mut diag: Vec<f64> = (0..op.len()).map(|i| op.diagonal(i)).collect();
        diag.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut e = f64::NAN;
        for w in diag.windows(2) {
            if w[1] - w[0] > 2.5 * delta0 {
                e = 0.5 * (w[0] + w[1]);
                break;
            }
        }
        assert!(e.is_finite(), "no usable spectral gap found");
        let rep =
            check_nonresonant_bounds(&params, &op, e, e + delta0 / 10.0, delta0, params.gamma0())
                .unwrap();
        assert!(rep.premise_ok);
        assert!(rep.norm_ok, "norm margin {}", rep.norm_margin);
        assert!(rep.decay_ok, "decay margin {}", rep.decay_margin);
    }

    #[test]
    fn nonresonant_bounds_report_broken_regime() {
        // 4 d eps / delta0 >= 1/2 regime broken: delta0 too large relative to
        // the gap actually available; the report must distinguish premise
        // failure from bound failure.
        let params = sawtooth_model(0.3);
        let block = cube_at_origin(6, 1).unwrap();
        let op = assemble(&params, &block, 0.3, Side::Right).unwrap();
        let rep = check_nonresonant_bounds(&params, &op, 0.5, 0.5, 0.4, params.gamma0()).unwrap();
        // With delta0 = 0.4 over a range-1 potential the premise cannot hold.
        assert!(!rep.premise_ok);
        assert!(!rep.resonant_sites.is_empty());
    }

    #[test]
    fn three_dimensional_assembly_and_spectrum() {
        let params = ModelParams::new(
            PotentialSpec::sawtooth(),
            FrequencySpec::new(
                vec![2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0, 5f64.sqrt() - 2.0],
                4.0,
                5,
            )
            .unwrap(),
            0.05,
        );
        let block = cube(1, &pt(&[0, 0, 0]));
        assert_eq!(block.len(), 7);
        let op = assemble(&params, &block, 0.3, Side::Right).unwrap();
        let s = op.spectrum().unwrap();
        // Residual check against the assembled matrix.
        for i in 0..7 {
            let v = s.eigenvectors.column(i);
            let r = op.matrix() * v - v * s.eigenvalues[i];
            assert!(r.amax() < 1e-10);
        }
        // Each site has 6 potential neighbors; the center sees all of them.
        let center = block.index_of(&pt(&[0, 0, 0])).unwrap();
        let row_sum: f64 = (0..7)
            .filter(|j| *j != center)
            .map(|j| op.matrix()[(center, j)])
            .sum();
        assert!((row_sum - 6.0 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn eig_count_matches_dense_route_d2() {
        let params = ModelParams::new(
            PotentialSpec::sawtooth(),
            FrequencySpec::default_2d(20),
            0.05,
        );
        let block = cube(2, &pt(&[0, 0]));
        let op = assemble(&params, &block, 0.41, Side::Right).unwrap();
        assert!(op.tridiag().is_none());
        let s = op.spectrum().unwrap();
        let (a, b) = (0.2, 0.7);
        let dense = s
            .eigenvalues
            .iter()
            .filter(|v| **v >= a && **v <= b)
            .count();
        assert_eq!(op.eig_count_in(a, b).unwrap(), dense);
    }
}
