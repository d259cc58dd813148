//! Potential families, left limits, frequency vectors and torus norms.
//!
//! Two potential classes are supported: bounded Lipschitz monotone (BLM,
//! normalized to v(0) = 0 and v(1-0) = 1) and unbounded Lipschitz monotone
//! (UBLM, diverging to -inf at 0+ and +inf at 1-). Unbounded values are
//! explicit +-infinity sentinels; operator assembly checks them and never
//! lets them leak into finite arithmetic.

use crate::error::{CoreError, Result};
use crate::lattice::LatticePoint;
use serde::{Deserialize, Serialize};

/// Which one-sided value to take at a discontinuity.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
pub enum Side {
    Right,
    Left,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Boundedness {
    Blm,
    Ublm,
}

/// Potential family. All families are 1-periodic and Lipschitz monotone on
/// their continuity intervals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum PotentialFamily {
    /// v(theta) = theta mod 1. The canonical BLM example, L = 1.
    Sawtooth,
    /// v(theta) = tan(pi (theta - 1/2)) on (0, 1): the increasing branch of
    /// the Maryland potential placed so that v(0+0) = -inf, v(1-0) = +inf.
    Maryland,
    /// Piecewise linear on [0,1) with upward jumps at interior breakpoints,
    /// rescaled so v(0) = 0 and v(1-0) = 1.
    PiecewiseLinear {
        /// Breakpoints 0 = t_1 < t_2 < ... < t_K < 1.
        breakpoints: Vec<f64>,
        /// Slope on [t_k, t_{k+1}), one per breakpoint, each > 0 (pre-scaling).
        slopes: Vec<f64>,
        /// Jump v(t_k+0) - v(t_k-0) >= 0 at interior breakpoints t_2..t_K.
        jumps: Vec<f64>,
        /// Values at segment starts after normalization (computed).
        #[serde(skip)]
        starts: Vec<f64>,
        /// Normalization factor applied to slopes and jumps (computed).
        #[serde(skip)]
        scale: f64,
    },
    /// Monotone samples v_i at theta = i/N plus the left limit at 1;
    /// evaluated by linear interpolation.
    Tabulated { samples: Vec<f64>, final_value: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: PotentialFamily,
    pub lipschitz_l: f64,
    pub boundedness: Boundedness,
}

/// Reduce to [0, 1). Exact for representable inputs.
pub fn frac(theta: f64) -> f64 {
    let f = theta - theta.floor();
    // floor(theta) == theta gives f == 0; rounding can otherwise only keep
    // f inside [0, 1) but we guard the half-open invariant anyway.
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

impl PotentialSpec {
    pub fn sawtooth() -> Self {
        Self {
            family: PotentialFamily::Sawtooth,
            lipschitz_l: 1.0,
            boundedness: Boundedness::Blm,
        }
    }

    pub fn maryland() -> Self {
        // Minimal slope of tan(pi(theta - 1/2)) is pi, attained at theta = 1/2.
        Self {
            family: PotentialFamily::Maryland,
            lipschitz_l: std::f64::consts::PI,
            boundedness: Boundedness::Ublm,
        }
    }

    pub fn piecewise_linear(
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
        jumps: Vec<f64>,
    ) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints[0] != 0.0 {
            return Err(CoreError::Domain(
                "piecewise-linear potential must start its breakpoints at 0".into(),
            ));
        }
        if slopes.len() != breakpoints.len() || jumps.len() + 1 != breakpoints.len() {
            return Err(CoreError::Domain(
                "piecewise-linear potential needs one slope per segment and one jump per interior breakpoint".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) || *breakpoints.last().unwrap() >= 1.0 {
            return Err(CoreError::Domain(
                "breakpoints must be strictly increasing inside [0, 1)".into(),
            ));
        }
        if slopes.iter().any(|s| *s <= 0.0) {
            return Err(CoreError::Domain("slopes must be positive".into()));
        }
        if jumps.iter().any(|j| *j < 0.0) {
            return Err(CoreError::Domain(
                "interior jumps must be non-negative (upward)".into(),
            ));
        }
        // Total rise over one period before normalization.
        let mut rise = 0.0;
        let k = breakpoints.len();
        for i in 0..k {
            let end = if i + 1 < k { breakpoints[i + 1] } else { 1.0 };
            rise += slopes[i] * (end - breakpoints[i]);
            if i + 1 < k {
                rise += jumps[i];
            }
        }
        let scale = 1.0 / rise;
        let mut starts = Vec::with_capacity(k);
        let mut v = 0.0;
        for i in 0..k {
            starts.push(v);
            let end = if i + 1 < k { breakpoints[i + 1] } else { 1.0 };
            v += scale * slopes[i] * (end - breakpoints[i]);
            if i + 1 < k {
                v += scale * jumps[i];
            }
        }
        let lipschitz_l = slopes.iter().cloned().fold(f64::INFINITY, f64::min) * scale;
        Ok(Self {
            family: PotentialFamily::PiecewiseLinear {
                breakpoints,
                slopes,
                jumps,
                starts,
                scale,
            },
            lipschitz_l,
            boundedness: Boundedness::Blm,
        })
    }

    pub fn tabulated(samples: Vec<f64>, final_value: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(CoreError::Domain(
                "tabulated potential needs at least two samples".into(),
            ));
        }
        if samples[0] != 0.0 {
            return Err(CoreError::Domain(
                "tabulated potential must have v(0) = 0".into(),
            ));
        }
        let mut extended = samples.clone();
        extended.push(final_value);
        if extended.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::Domain(
                "tabulated samples must be strictly increasing".into(),
            ));
        }
        let n = samples.len() as f64;
        let lipschitz_l = extended
            .windows(2)
            .map(|w| (w[1] - w[0]) * n)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            family: PotentialFamily::Tabulated {
                samples,
                final_value,
            },
            lipschitz_l,
            boundedness: Boundedness::Blm,
        })
    }

    /// Evaluate v(theta) (side = Right) or the left limit v(theta - 0) after
    /// reduction mod 1. Unbounded families return +-infinity sentinels at the
    /// period endpoints, never finite garbage.
    pub fn eval(&self, theta: f64, side: Side) -> f64 {
        let t = frac(theta);
        match (&self.family, side) {
            (PotentialFamily::Sawtooth, Side::Right) => t,
            (PotentialFamily::Sawtooth, Side::Left) => {
                if t == 0.0 {
                    1.0
                } else {
                    t
                }
            }
            (PotentialFamily::Maryland, Side::Right) => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (std::f64::consts::PI * (t - 0.5)).tan()
                }
            }
            (PotentialFamily::Maryland, Side::Left) => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    (std::f64::consts::PI * (t - 0.5)).tan()
                }
            }
            (
                PotentialFamily::PiecewiseLinear {
                    breakpoints,
                    slopes,
                    starts,
                    scale,
                    ..
                },
                side,
            ) => {
                if t == 0.0 && side == Side::Left {
                    return 1.0;
                }
                // Segment index: largest k with breakpoints[k] <= t; the left
                // limit at an interior breakpoint belongs to the previous
                // segment.
                let mut k = match breakpoints.binary_search_by(|b| b.partial_cmp(&t).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                };
                if side == Side::Left && k > 0 && breakpoints[k] == t {
                    k -= 1;
                    let end = if k + 1 < breakpoints.len() {
                        breakpoints[k + 1]
                    } else {
                        1.0
                    };
                    return starts[k] + scale * slopes[k] * (end - breakpoints[k]);
                }
                starts[k] + scale * slopes[k] * (t - breakpoints[k])
            }
            (
                PotentialFamily::Tabulated {
                    samples,
                    final_value,
                },
                side,
            ) => {
                if t == 0.0 && side == Side::Left {
                    return *final_value;
                }
                let n = samples.len();
                let pos = t * n as f64;
                let i = (pos.floor() as usize).min(n - 1);
                let lo = samples[i];
                let hi = if i + 1 < n {
                    samples[i + 1]
                } else {
                    *final_value
                };
                lo + (pos - i as f64) * (hi - lo)
            }
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.boundedness == Boundedness::Ublm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DcProvenance {
    UserSupplied,
    EmpiricallyEstimated { radius: usize },
}

/// Frequency vector with Diophantine parameters (tau, gamma).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencySpec {
    pub omega: Vec<f64>,
    pub tau: f64,
    pub gamma_dc: f64,
    pub gamma_dc_provenance: DcProvenance,
}

/// Distance of t to the nearest integer.
pub fn torus_norm_scalar(t: f64) -> f64 {
    (t - t.round()).abs()
}

impl FrequencySpec {
    /// Build a frequency spec, estimating the Diophantine constant
    /// empirically over 0 < ||x||_1 <= radius.
    pub fn new(omega: Vec<f64>, tau: f64, radius: usize) -> Result<Self> {
        let d = omega.len();
        if d == 0 || d > crate::lattice::MAX_DIMENSION {
            return Err(CoreError::DimensionUnsupported(d));
        }
        let mut spec = Self {
            omega,
            tau,
            gamma_dc: f64::NAN,
            gamma_dc_provenance: DcProvenance::EmpiricallyEstimated { radius },
        };
        spec.gamma_dc = spec.estimate_dc_constant(radius)?;
        Ok(spec)
    }

    pub fn with_gamma(omega: Vec<f64>, tau: f64, gamma_dc: f64) -> Result<Self> {
        let d = omega.len();
        if d == 0 || d > crate::lattice::MAX_DIMENSION {
            return Err(CoreError::DimensionUnsupported(d));
        }
        Ok(Self {
            omega,
            tau,
            gamma_dc,
            gamma_dc_provenance: DcProvenance::UserSupplied,
        })
    }

    /// Golden-mean frequency in d = 1 with tau = 2.
    pub fn golden(radius: usize) -> Self {
        let omega = vec![(5f64.sqrt() - 1.0) / 2.0];
        Self::new(omega, 2.0, radius).expect("golden mean is irrational at any finite radius")
    }

    /// Default d = 2 frequency (sqrt(2) - 1, sqrt(3) - 1) with tau = 3.
    pub fn default_2d(radius: usize) -> Self {
        let omega = vec![2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0];
        Self::new(omega, 3.0, radius).expect("default 2d frequency is irrational")
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// x . omega in fixed coordinate order.
    pub fn phase_shift(&self, x: &LatticePoint) -> f64 {
        x.dot(&self.omega)
    }

    /// ||x . omega||_T = inf_l |l - x . omega|.
    pub fn torus_norm(&self, x: &LatticePoint) -> f64 {
        torus_norm_scalar(self.phase_shift(x))
    }

    /// min over 0 < ||x||_1 <= radius of ||x . omega||_T ||x||_1^tau; the
    /// value makes the Diophantine inequality tight at this radius.
    pub fn estimate_dc_constant(&self, radius: usize) -> Result<f64> {
        if radius == 0 {
            return Err(CoreError::Domain(
                "estimate_dc_constant requires radius >= 1".into(),
            ));
        }
        let origin = LatticePoint::origin(self.dim())?;
        let ball = crate::lattice::cube(radius as i64, &origin);
        let mut best = f64::INFINITY;
        for x in ball.iter() {
            let n1 = x.norm1();
            if n1 == 0 {
                continue;
            }
            let t = self.torus_norm(x);
            if t == 0.0 {
                return Err(CoreError::RationalFrequency {
                    site: x.coords().to_vec(),
                    radius,
                });
            }
            best = best.min(t * (n1 as f64).powf(self.tau));
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sawtooth_basic_values() {
        let v = PotentialSpec::sawtooth();
        assert_eq!(v.eval(0.25, Side::Right), 0.25);
        assert_eq!(v.eval(1.0, Side::Left), 1.0);
        assert_eq!(v.eval(1.0, Side::Right), 0.0);
        assert_eq!(v.eval(0.0, Side::Right), 0.0);
        assert_eq!(v.eval(-0.25, Side::Right), 0.75);
    }

    #[test]
    fn sawtooth_is_theta_mod_one_with_unit_jump() {
        let v = PotentialSpec::sawtooth();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let t: f64 = rng.gen_range(-5.0..5.0);
            assert_eq!(v.eval(t, Side::Right), frac(t));
        }
        // Jump at each integer is -1.
        for k in -3..=3 {
            let t = k as f64;
            assert_eq!(v.eval(t, Side::Right) - v.eval(t, Side::Left), -1.0);
        }
    }

    #[test]
    fn maryland_values_and_sentinels() {
        let v = PotentialSpec::maryland();
        // Increasing branch through (1/2, 0); tan hits 1 a quarter period
        // above the zero.
        assert_abs_diff_eq!(v.eval(0.75, Side::Right), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.eval(0.25, Side::Right), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.eval(0.5, Side::Right), 0.0, epsilon = 1e-12);
        assert_eq!(v.eval(0.0, Side::Right), f64::NEG_INFINITY);
        assert_eq!(v.eval(1.0, Side::Right), f64::NEG_INFINITY);
        assert_eq!(v.eval(1.0, Side::Left), f64::INFINITY);
        assert!(v.eval(1e-12, Side::Right) < -1e10);
        assert!(v.eval(1.0 - 1e-12, Side::Right) > 1e10);
    }

    #[test]
    fn piecewise_linear_normalization_and_jumps() {
        let v = PotentialSpec::piecewise_linear(
            vec![0.0, 0.3, 0.7],
            vec![1.0, 2.0, 1.0],
            vec![0.1, 0.2],
        )
        .unwrap();
        assert_eq!(v.eval(0.0, Side::Right), 0.0);
        assert_abs_diff_eq!(v.eval(1.0, Side::Left), 1.0, epsilon = 1e-14);
        // Upward jump at 0.3.
        let left = v.eval(0.3, Side::Left);
        let right = v.eval(0.3, Side::Right);
        assert!(right > left);
        // Interior monotonicity on a grid.
        let mut prev = -1.0;
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            let val = v.eval(t, Side::Right);
            assert!(val >= prev);
            prev = val;
        }
    }

    #[test]
    fn piecewise_linear_rejects_downward_jumps() {
        assert!(
            PotentialSpec::piecewise_linear(vec![0.0, 0.5], vec![1.0, 1.0], vec![-0.1]).is_err()
        );
    }

    #[test]
    fn tabulated_interpolates_monotone_samples() {
        let samples: Vec<f64> = (0..16).map(|i| (i as f64 / 16.0).powi(2)).collect();
        let v = PotentialSpec::tabulated(samples, 1.0).unwrap();
        assert_eq!(v.eval(0.0, Side::Right), 0.0);
        assert_abs_diff_eq!(v.eval(0.0, Side::Left), 1.0, epsilon = 1e-14);
        assert!(v.lipschitz_l > 0.0);
        let mut prev = -1.0;
        for i in 0..500 {
            let t = i as f64 / 500.0;
            let val = v.eval(t, Side::Right);
            assert!(val >= prev);
            prev = val;
        }
    }

    #[test]
    fn monotonicity_audit_within_continuity_interval() {
        // eval(t2) - eval(t1) >= L (t2 - t1) - 1e-12 on random pairs.
        let specs = [PotentialSpec::sawtooth(), PotentialSpec::maryland()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for v in &specs {
            for _ in 0..10_000 {
                let a: f64 = rng.gen_range(0.01..0.99);
                let b: f64 = rng.gen_range(0.01..0.99);
                let (t1, t2) = if a < b { (a, b) } else { (b, a) };
                let lhs = v.eval(t2, Side::Right) - v.eval(t1, Side::Right);
                assert!(lhs >= v.lipschitz_l * (t2 - t1) - 1e-12);
            }
        }
    }

    #[test]
    fn torus_norm_examples() {
        let f = FrequencySpec::with_gamma(vec![0.7], 2.0, 0.1).unwrap();
        let x = LatticePoint::new(vec![1]).unwrap();
        assert_abs_diff_eq!(f.torus_norm(&x), 0.3, epsilon = 1e-15);
        let o = LatticePoint::origin(1).unwrap();
        assert_eq!(f.torus_norm(&o), 0.0);

        let g = FrequencySpec::golden(10);
        let x2 = LatticePoint::new(vec![2]).unwrap();
        assert_abs_diff_eq!(g.torus_norm(&x2), 2.0 * g.omega[0] - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn torus_norm_symmetric() {
        let f = FrequencySpec::default_2d(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x =
                LatticePoint::new(vec![rng.gen_range(-50..50), rng.gen_range(-50..50)]).unwrap();
            assert_abs_diff_eq!(f.torus_norm(&x), f.torus_norm(&x.neg()), epsilon = 1e-15);
        }
    }

    #[test]
    fn dc_constant_monotone_in_radius() {
        let f = FrequencySpec::golden(1);
        let mut prev = f.estimate_dc_constant(1).unwrap();
        assert_abs_diff_eq!(prev, torus_norm_scalar(f.omega[0]), epsilon = 1e-15);
        for n in 2..100 {
            let cur = f.estimate_dc_constant(n).unwrap();
            assert!(cur <= prev);
            assert!(cur > 0.0);
            prev = cur;
        }
    }

    #[test]
    fn dc_constant_rational_frequency_rejected() {
        let f = FrequencySpec::with_gamma(vec![0.5], 2.0, 0.1).unwrap();
        match f.estimate_dc_constant(2) {
            Err(CoreError::RationalFrequency { .. }) => {}
            other => panic!("expected RationalFrequency, got {:?}", other),
        }
    }
}
