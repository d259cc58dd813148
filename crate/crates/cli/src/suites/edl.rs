//! Dynamical-localization suite: the center-grouped spectral bound for the
//! evolution kernel over a pair table, its fitted decay rate, and the
//! pointwise inequality chain at every sampled time.

use crate::config::ExperimentConfig;
use crate::report::{fmt_f64, fmt_point, Check, CsvWriter, SuiteOutcome};
use crate::suites::write_json;
use mslab_core::localization::{self, EdlKernel};
use mslab_core::LatticePoint;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Report {
    box_sites: usize,
    pairs: usize,
    t_samples: usize,
    fitted_rate: f64,
    /// Fit restricted to pairs above the eigensolver noise floor; the tail
    /// of the table flattens at squared rounding noise.
    fitted_rate_above_noise: f64,
    rate_floor: f64,
    chain_violations: usize,
    checks: Vec<Check>,
}

pub fn run(config: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<SuiteOutcome> {
    let params = config.model()?;
    let opts = &config.edl;
    let mut outcome = SuiteOutcome::new("edl");

    let sys = localization::diagonalize_box(&params, opts.box_radius, opts.theta)?;

    // t = 0 plus log-spaced times up to t_max.
    let mut ts = vec![0.0];
    let lo: f64 = 1e-2;
    for i in 0..opts.t_samples.saturating_sub(1) {
        let f = i as f64 / (opts.t_samples - 2).max(1) as f64;
        ts.push(lo * (opts.t_max / lo).powf(f));
    }

    // Centered pairs with distances spread up to max_dist.
    let mut pairs = Vec::new();
    for k in 1..=opts.pairs {
        let dist = ((k as i64 * opts.max_dist) / opts.pairs as i64).max(1);
        let half = dist / 2;
        let x = LatticePoint::new(vec![-half; params.dim()])?;
        let y = LatticePoint::new(vec![dist - half; params.dim()])?;
        if params.dim() == 1 {
            pairs.push((x, y));
        } else {
            // Keep the pair on the first axis in higher dimensions.
            let mut xc = vec![0i64; params.dim()];
            let mut yc = vec![0i64; params.dim()];
            xc[0] = -half;
            yc[0] = dist - half;
            pairs.push((LatticePoint::new(xc)?, LatticePoint::new(yc)?));
        }
    }

    let kernels: Vec<EdlKernel> = pairs
        .par_iter()
        .map(|(x, y)| localization::edl_kernel(&sys, x, y, &ts))
        .collect();

    let mut csv = CsvWriter::create(
        &out_dir.join("edl_kernel.csv"),
        &["x", "y", "dist", "sup_sampled", "sum_abs", "spectral_bound"],
    )?;
    let mut chain_violations = 0usize;
    let mut fit_pts = Vec::new();
    let mut fit_pts_clean = Vec::new();
    for ((x, y), k) in pairs.iter().zip(&kernels) {
        let dist = x.dist1(y);
        if k.sup_sampled > k.sum_abs + 1e-10 || k.sum_abs > k.spectral_bound + 1e-10 {
            chain_violations += 1;
        }
        if k.spectral_bound > 0.0 && k.spectral_bound.is_finite() {
            fit_pts.push((dist as f64, k.spectral_bound.ln()));
        }
        if k.spectral_bound > 1e-14 {
            fit_pts_clean.push((dist as f64, k.spectral_bound.ln()));
        }
        csv.row([
            fmt_point(x.coords()),
            fmt_point(y.coords()),
            dist.to_string(),
            fmt_f64(k.sup_sampled),
            fmt_f64(k.sum_abs),
            fmt_f64(k.spectral_bound),
        ])?;
    }
    csv.finish()?;

    outcome.push(Check::new(
        "edl_inequality_chain",
        true,
        chain_violations == 0,
        chain_violations as f64,
    ));

    let (fitted_rate, rate_floor) = if params.epsilon > 0.0 && fit_pts.len() >= 4 {
        let rate = -least_squares_slope(&fit_pts);
        let floor = params.epsilon.ln().abs() / 800.0;
        outcome.push(Check::new(
            "edl_spectral_bound_decay_rate",
            true,
            rate >= floor,
            (floor - rate).max(0.0),
        ));
        (rate, floor)
    } else {
        (0.0, 0.0)
    };

    let fitted_rate_above_noise = if fit_pts_clean.len() >= 3 {
        -least_squares_slope(&fit_pts_clean)
    } else {
        0.0
    };
    let report = Report {
        box_sites: sys.eigenvalues.len(),
        pairs: pairs.len(),
        t_samples: ts.len(),
        fitted_rate,
        fitted_rate_above_noise,
        rate_floor,
        chain_violations,
        checks: outcome.checks.clone(),
    };
    write_json(&out_dir.join("edl.json"), &report)?;
    Ok(outcome)
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
