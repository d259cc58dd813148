//! Verification suites: each consumes the experiment config, writes its CSV
//! tables and JSON report under the output directory, and returns the
//! outcome that drives the exit code.

pub mod edl;
pub mod localize;
pub mod msa_verify;
pub mod rellich_scan;
pub mod schur_identities;

use crate::config::ExperimentConfig;
use crate::report::SuiteOutcome;
use std::path::Path;

pub fn dispatch(
    name: &str,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> anyhow::Result<SuiteOutcome> {
    match name {
        "rellich_scan" => rellich_scan::run(config, out_dir),
        "msa_verify" => msa_verify::run(config, out_dir),
        "localize" => localize::run(config, out_dir),
        "edl" => edl::run(config, out_dir),
        "schur_identities" => schur_identities::run(config, out_dir),
        other => anyhow::bail!("unknown suite {other:?}"),
    }
}

/// Write a JSON report with stable field order; no timestamps, so repeated
/// runs are byte-identical.
pub fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
