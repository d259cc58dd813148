//! Localization suite: box diagonalization, per-eigenfunction decay-rate
//! fits against the theoretical floor, Poisson-formula spot checks, and the
//! regularized-annulus probe when the schedule has enough scales.

use crate::config::ExperimentConfig;
use crate::report::{fmt_f64, fmt_point, Check, CsvWriter, SuiteOutcome};
use crate::suites::write_json;
use mslab_core::error::CoreError;
use mslab_core::lattice::cube_at_origin;
use mslab_core::localization::{self, annulus_probe};
use mslab_core::msa::BlockHierarchy;
use mslab_core::operator::assemble;
use mslab_core::rellich::CurveOracle;
use mslab_core::{LatticePoint, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Report {
    box_sites: usize,
    fitted: usize,
    rate_floor: f64,
    fraction_above_floor: f64,
    median_rate: f64,
    median_target: f64,
    poisson_checks: usize,
    poisson_max_residual: f64,
    annulus: Option<AnnulusReport>,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct AnnulusReport {
    sites: usize,
    good: bool,
    window_clear: bool,
    premise_violated: Option<String>,
}

pub fn run(config: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<SuiteOutcome> {
    let params = config.model()?;
    let opts = &config.localize;
    let mut outcome = SuiteOutcome::new("localize");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let sys = localization::diagonalize_box(&params, opts.box_radius, opts.theta)?;
    let n = sys.eigenvalues.len();

    let fits: Vec<Option<localization::DecayFit>> = (0..n)
        .into_par_iter()
        .map(|s| localization::decay_profile(&sys, s).ok())
        .collect();

    let mut csv = CsvWriter::create(
        &out_dir.join("decay_profiles.csv"),
        &[
            "s",
            "mu",
            "center",
            "rho",
            "prefactor",
            "r_squared",
            "samples",
        ],
    )?;
    let mut rates = Vec::new();
    for (s, fit) in fits.iter().enumerate() {
        match fit {
            Some(f) => {
                rates.push(f.rate);
                csv.row([
                    s.to_string(),
                    fmt_f64(sys.eigenvalues[s]),
                    fmt_point(sys.centers[s].coords()),
                    fmt_f64(f.rate),
                    fmt_f64(f.prefactor),
                    fmt_f64(f.r_squared),
                    f.samples_used.to_string(),
                ])?;
            }
            None => {
                csv.row([
                    s.to_string(),
                    fmt_f64(sys.eigenvalues[s]),
                    fmt_point(sys.centers[s].coords()),
                    "nan".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                    "0".to_string(),
                ])?;
            }
        }
    }
    csv.finish()?;

    let (fraction_above_floor, median_rate, rate_floor, median_target) = if params.epsilon > 0.0 {
        let log_eps = params.epsilon.ln().abs();
        let floor = log_eps / 400.0;
        let above = rates.iter().filter(|r| **r >= floor).count();
        let fraction = if rates.is_empty() {
            0.0
        } else {
            above as f64 / rates.len() as f64
        };
        let mut sorted = rates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
        let median = if sorted.is_empty() {
            0.0
        } else {
            sorted[sorted.len() / 2]
        };
        outcome.push(Check::new(
            "decay_rate_floor_95pct",
            true,
            fraction >= 0.95,
            1.0 - fraction,
        ));
        outcome.push(Check::new(
            "decay_rate_median",
            true,
            median >= 0.5 * log_eps,
            (0.5 * log_eps - median).max(0.0),
        ));
        (fraction, median, floor, 0.5 * log_eps)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };

    // Poisson-formula spot checks on exact eigenpairs with well-conditioned
    // windows.
    let mut poisson_max_residual = 0.0f64;
    let mut poisson_checks = 0usize;
    let mut attempts = 0usize;
    while poisson_checks < opts.poisson_checks && attempts < opts.poisson_checks * 20 {
        attempts += 1;
        let s = rng.gen_range(0..n);
        let e = sys.eigenvalues[s];
        let w_radius = rng.gen_range(opts.box_radius / 6..opts.box_radius / 2);
        let window = cube_at_origin(w_radius, params.dim())?;
        let op_w = assemble(&params, &window, opts.theta, Side::Right)?;
        if op_w.spectral_dist(e)? < 1e-6 {
            continue;
        }
        let x = LatticePoint::new(vec![rng.gen_range(-2i64..=2); params.dim()])?;
        let psi: Vec<f64> = sys.eigenvectors.column(s).iter().cloned().collect();
        let r = localization::poisson_residual(
            &params,
            &sys.box_set,
            &psi,
            e,
            &window,
            &x,
            opts.theta,
        )?;
        let linf = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        poisson_max_residual = poisson_max_residual.max(r / linf.max(1e-300));
        poisson_checks += 1;
    }
    if poisson_checks > 0 {
        outcome.push(Check::new(
            "poisson_identity_residual",
            true,
            poisson_max_residual <= 1e-8,
            poisson_max_residual / 1e-8,
        ));
    }

    // Annulus probe at the first scale when the schedule allows it.
    let schedule = config.build_schedule()?;
    let annulus = if schedule.num_scales() >= 2 && params.dim() == 1 {
        let hierarchy = BlockHierarchy::from_cubes(&schedule, params.dim())?;
        let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
        let theta = opts.theta;
        let e = oracle.value(1, theta, Side::Right)?.value;
        match annulus_probe(&oracle, 1, theta, e) {
            Ok((set, report, window_clear)) => {
                outcome.count(true, report.good);
                Some(AnnulusReport {
                    sites: set.len(),
                    good: report.good,
                    window_clear,
                    premise_violated: None,
                })
            }
            Err(CoreError::PremiseViolated {
                a,
                b,
                dist,
                required,
            }) => {
                outcome.count(false, false);
                Some(AnnulusReport {
                    sites: 0,
                    good: false,
                    window_clear: false,
                    premise_violated: Some(format!(
                        "separation {dist} < {required} between {a:?} and {b:?}"
                    )),
                })
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let report = Report {
        box_sites: n,
        fitted: rates.len(),
        rate_floor,
        fraction_above_floor,
        median_rate,
        median_target,
        poisson_checks,
        poisson_max_residual,
        annulus,
        checks: outcome.checks.clone(),
    };
    write_json(&out_dir.join("localize.json"), &report)?;
    Ok(outcome)
}
