//! Report plumbing: the (premise_ok, bound_ok, margin) triple every bound
//! check carries, CSV emission at fixed precision, and the suite outcome
//! that decides the exit code.

use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// One checked inequality. Margins are normalized so the bound holds iff
/// margin <= 1 (or as documented per check).
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub premise_ok: bool,
    pub bound_ok: bool,
    pub margin: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, premise_ok: bool, bound_ok: bool, margin: f64) -> Self {
        Self {
            name: name.into(),
            premise_ok,
            bound_ok,
            margin,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub checks: Vec<Check>,
    /// Aggregate counters over sweeps that do not store one Check per draw.
    pub premise_violated_failures: usize,
    pub bound_violated_failures: usize,
}

impl SuiteOutcome {
    pub fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, check: Check) {
        if !check.bound_ok {
            if check.premise_ok {
                self.bound_violated_failures += 1;
            } else {
                self.premise_violated_failures += 1;
            }
        }
        self.checks.push(check);
    }

    /// Record a sweep instance without keeping a named row.
    pub fn count(&mut self, premise_ok: bool, bound_ok: bool) {
        if !bound_ok {
            if premise_ok {
                self.bound_violated_failures += 1;
            } else {
                self.premise_violated_failures += 1;
            }
        }
    }
}

/// 17 significant digits, bit-stable round trips.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{:.16e}", x)
}

/// Minimal CSV writer: caller provides pre-formatted cells; commas and
/// newlines are not expected in this corpus and are rejected loudly.
pub struct CsvWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> std::io::Result<Self> {
        let file = std::fs::File::create(path)?;
        let mut w = Self {
            out: std::io::BufWriter::new(file),
        };
        w.row(header.iter().map(|s| s.to_string()))?;
        Ok(w)
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) -> std::io::Result<()> {
        let mut first = true;
        for cell in cells {
            assert!(
                !cell.contains(',') && !cell.contains('\n'),
                "CSV cell needs quoting: {cell:?}"
            );
            if !first {
                write!(self.out, ",")?;
            }
            write!(self.out, "{cell}")?;
            first = false;
        }
        writeln!(self.out)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Lattice point cell: coordinates joined by ';'.
pub fn fmt_point(coords: &[i64]) -> String {
    coords
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(";")
}
