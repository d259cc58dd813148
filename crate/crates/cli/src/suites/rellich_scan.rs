//! Curve construction scan: builds E_n over the theta grid, audits
//! monotonicity and jump signs, and (for unbounded potentials) the two-sided
//! continuity at the discontinuities.

use crate::config::ExperimentConfig;
use crate::report::{fmt_f64, fmt_point, Check, CsvWriter, SuiteOutcome};
use crate::suites::write_json;
use mslab_core::msa::{self, BlockHierarchy};
use mslab_core::rellich::{self, CurveOracle};
use mslab_core::Side;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Report {
    scale: usize,
    samples: usize,
    discontinuities: usize,
    schedule_flags: mslab_core::msa::ScheduleFlags,
    separation_premises_dc: Vec<bool>,
    separation_premises_empirical: Vec<bool>,
    max_step_vs_budget: Vec<f64>,
    /// (worst tail, budget e^{-3 l_{n-1}}, probes) for multi-scale runs.
    scale_tail: Option<(f64, f64, usize)>,
    regime_violations: usize,
    audit: rellich::MonotonicityReport,
    ublm_continuity: Option<rellich::UblmContinuityReport>,
    checks: Vec<Check>,
}

pub fn run(config: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<SuiteOutcome> {
    let params = config.model()?;
    let schedule = config.build_schedule()?;
    let hierarchy = BlockHierarchy::from_cubes(&schedule, params.dim())?;
    let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
    let grid = config.theta_grid.build();
    let n = schedule.num_scales();

    let curve = rellich::construct_curve(&oracle, n, &grid)?;
    let mut outcome = SuiteOutcome::new("rellich_scan");

    // Curve table.
    let mut csv = CsvWriter::create(
        &out_dir.join("rellich_curve.csv"),
        &[
            "theta",
            "scale",
            "value",
            "branch_index",
            "side",
            "in_regime_flag",
        ],
    )?;
    for s in &curve.samples {
        for m in 0..=n {
            let branch = if s.issue.is_none() {
                rellich::branch_index(&params, &hierarchy, m, s.theta, Side::Right, s.values[m])
                    .map(|i| i.to_string())
                    .unwrap_or_else(|_| String::new())
            } else {
                String::new()
            };
            csv.row([
                fmt_f64(s.theta),
                m.to_string(),
                fmt_f64(s.values[m]),
                branch,
                "R".to_string(),
                (s.in_regime as u8).to_string(),
            ])?;
        }
    }
    for r in &curve.jump_records {
        csv.row([
            fmt_f64(r.alpha),
            n.to_string(),
            fmt_f64(r.left_limit),
            String::new(),
            "L".to_string(),
            "1".to_string(),
        ])?;
    }
    csv.finish()?;

    // Jump table.
    let mut jumps = CsvWriter::create(
        &out_dir.join("rellich_jumps.csv"),
        &[
            "alpha",
            "site",
            "left_limit",
            "right_value",
            "jump",
            "extrapolation_gap",
        ],
    )?;
    for r in &curve.jump_records {
        jumps.row([
            fmt_f64(r.alpha),
            fmt_point(r.site.coords()),
            fmt_f64(r.left_limit),
            fmt_f64(r.right_value),
            fmt_f64(r.jump),
            fmt_f64(r.extrapolation_gap),
        ])?;
    }
    jumps.finish()?;

    // Step budgets |E_m - E_{m-1}| <= budget_m over the grid.
    let sep_dc = msa::separation_premises(&params, &schedule, &hierarchy);
    let sep_emp = empirical_separation(&params, &schedule, &hierarchy);
    let mut max_step_vs_budget = Vec::new();
    for m in 1..=n {
        let budget = schedule.resonance_budget(m);
        let mut worst: f64 = 0.0;
        for s in &curve.samples {
            if s.issue.is_none() {
                let step = (s.values[m] - s.values[m - 1]).abs();
                worst = worst.max(if budget > 0.0 { step / budget } else { step });
            }
        }
        max_step_vs_budget.push(worst);
        outcome.push(Check::new(
            format!("step_budget_scale_{m}"),
            sep_emp.get(m - 1).copied().unwrap_or(false),
            worst <= 1.0 || (budget == 0.0 && worst == 0.0),
            worst,
        ));
    }

    let audit = rellich::audit_monotonicity(&curve, params.potential.lipschitz_l);
    let premise = sep_emp.iter().all(|b| *b);
    outcome.push(Check::new(
        "lipschitz_quotients",
        premise,
        audit.quotient_ok,
        if audit.min_quotient.is_finite() {
            params.potential.lipschitz_l - audit.min_quotient
        } else {
            0.0
        },
    ));
    outcome.push(Check::new(
        "interior_jumps_nonnegative",
        premise,
        audit.jumps_ok,
        -audit.min_interior_jump,
    ));

    let ublm_continuity = if params.potential.is_unbounded() {
        let rep = rellich::ublm_continuity_check(&oracle, &curve, &grid)?;
        outcome.push(Check::new(
            "ublm_two_sided_continuity",
            premise,
            rep.ok,
            rep.max_discrepancy,
        ));
        Some(rep)
    } else {
        None
    };

    // Cross-scale Schur tail |s_{theta,n} - s_{theta,n-1}| at the top-scale
    // curve value, against the e^{-3 l_{n-1}} budget.
    let scale_tail = if n >= 2 && !params.potential.is_unbounded() {
        let bound = (-3.0 * schedule.length(n - 1) as f64).exp();
        let origin = mslab_core::LatticePoint::origin(params.dim())?;
        let mut worst = 0.0f64;
        let mut probes = 0usize;
        for i in 0..16 {
            let theta = (i as f64 + 0.5) / 16.0;
            let big = mslab_core::assemble(&params, hierarchy.block(n), theta, Side::Right)?;
            let small = mslab_core::assemble(&params, hierarchy.block(n - 1), theta, Side::Right)?;
            let z = oracle.value(n - 1, theta, Side::Right)?.value;
            if let Ok(tail) = mslab_core::schur::scale_tail(&big, &small, &origin, z) {
                worst = worst.max(tail);
                probes += 1;
            }
        }
        if probes > 0 {
            outcome.push(Check::new(
                "schur_scale_tail",
                sep_emp.iter().all(|b| *b),
                worst <= bound,
                if bound > 0.0 { worst / bound } else { worst },
            ));
        }
        Some((worst, bound, probes))
    } else {
        None
    };

    let regime_violations = curve.samples.iter().filter(|s| !s.in_regime).count();
    let report = Report {
        scale: n,
        samples: curve.samples.len(),
        discontinuities: curve.discontinuities.len(),
        schedule_flags: schedule.flags.clone(),
        separation_premises_dc: sep_dc,
        separation_premises_empirical: sep_emp,
        max_step_vs_budget,
        scale_tail,
        regime_violations,
        audit,
        ublm_continuity,
        checks: outcome.checks.clone(),
    };
    write_json(&out_dir.join("rellich_scan.json"), &report)?;
    Ok(outcome)
}

/// Separation premise with the Diophantine step replaced by exact torus
/// norms over the block: L min_{x in B_{m+1}, x != o} ||x.omega||_T >= 20 delta_m.
pub fn empirical_separation(
    params: &mslab_core::ModelParams,
    schedule: &mslab_core::ScaleSchedule,
    hierarchy: &BlockHierarchy,
) -> Vec<bool> {
    (0..schedule.num_scales())
        .map(|m| {
            let block = hierarchy.block(m + 1);
            let min_shift = block
                .iter()
                .filter(|x| x.norm1() != 0)
                .map(|x| params.freq.torus_norm(x))
                .fold(f64::INFINITY, f64::min);
            params.potential.lipschitz_l * min_shift >= 20.0 * schedule.delta(m)
        })
        .collect()
}
