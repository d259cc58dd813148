//! Experiment runner: parse the config, dispatch the verification suites on
//! a bounded worker pool, emit reports, and map outcomes to exit codes.

pub mod config;
pub mod report;
pub mod suites;

use config::ExperimentConfig;
use report::SuiteOutcome;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Summary {
    suites: Vec<SuiteOutcome>,
    errors: Vec<String>,
    exit_code: i32,
}

/// Exit code semantics: 0 when every failed check (if any) is absent,
/// 2 when all failures happened with their premises already violated,
/// 1 on hard errors or bound violations under satisfied premises.
pub fn exit_code_of(outcomes: &[SuiteOutcome], errors: &[String]) -> i32 {
    if !errors.is_empty() {
        return 1;
    }
    let bound = outcomes
        .iter()
        .map(|o| o.bound_violated_failures)
        .sum::<usize>();
    let premise = outcomes
        .iter()
        .map(|o| o.premise_violated_failures)
        .sum::<usize>();
    if bound > 0 {
        1
    } else if premise > 0 {
        2
    } else {
        0
    }
}

/// Run the selected suites (or all configured ones) and write reports to the
/// output directory. Returns the process exit code.
pub fn run_experiment(
    config: &ExperimentConfig,
    only_suite: Option<&str>,
    out_dir: &Path,
) -> anyhow::Result<i32> {
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()?;

    let selected: Vec<String> = match only_suite {
        Some(s) => {
            if !config.suites.iter().any(|x| x == s) {
                anyhow::bail!("suite {s:?} is not enabled in the config");
            }
            vec![s.to_string()]
        }
        None => config.suites.clone(),
    };

    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for name in &selected {
        let result = pool.install(|| suites::dispatch(name, config, out_dir));
        match result {
            Ok(outcome) => {
                eprintln!(
                    "suite {name}: {} checks, {} bound violations, {} premise violations",
                    outcome.checks.len(),
                    outcome.bound_violated_failures,
                    outcome.premise_violated_failures
                );
                outcomes.push(outcome);
            }
            Err(e) => {
                eprintln!("suite {name} failed: {e}");
                errors.push(format!("{name}: {e}"));
            }
        }
    }
    let exit_code = exit_code_of(&outcomes, &errors);
    let summary = Summary {
        suites: outcomes,
        errors,
        exit_code,
    };
    suites::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(exit_code)
}
