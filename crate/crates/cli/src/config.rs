//! Experiment configuration: one JSON document drives a run.

use mslab_core::error::{CoreError, Result};
use mslab_core::msa::ScaleSchedule;
use mslab_core::quasiperiodic::{FrequencySpec, PotentialSpec};
use mslab_core::rellich::ThetaGridSpec;
use mslab_core::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialConfig {
    Sawtooth,
    Maryland,
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
        jumps: Vec<f64>,
    },
    Tabulated {
        samples: Vec<f64>,
        final_value: f64,
    },
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PotentialSpec> {
        match self {
            Self::Sawtooth => Ok(PotentialSpec::sawtooth()),
            Self::Maryland => Ok(PotentialSpec::maryland()),
            Self::PiecewiseLinear {
                breakpoints,
                slopes,
                jumps,
            } => {
                PotentialSpec::piecewise_linear(breakpoints.clone(), slopes.clone(), jumps.clone())
            }
            Self::Tabulated {
                samples,
                final_value,
            } => PotentialSpec::tabulated(samples.clone(), *final_value),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyConfig {
    /// Defaults to the golden mean (d=1), (sqrt2-1, sqrt3-1) (d=2) or
    /// (sqrt2-1, sqrt3-1, sqrt5-2) (d=3).
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    #[serde(default)]
    pub tau: Option<f64>,
    /// Supplying gamma skips the empirical estimate.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_estimate_radius")]
    pub estimate_radius: usize,
}

fn default_estimate_radius() -> usize {
    100
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self {
            omega: None,
            tau: None,
            gamma: None,
            estimate_radius: default_estimate_radius(),
        }
    }
}

impl FrequencyConfig {
    pub fn build(&self, dimension: usize) -> Result<FrequencySpec> {
        let omega = match &self.omega {
            Some(o) => o.clone(),
            None => match dimension {
                1 => vec![(5f64.sqrt() - 1.0) / 2.0],
                2 => vec![2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0],
                3 => vec![2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0, 5f64.sqrt() - 2.0],
                d => return Err(CoreError::DimensionUnsupported(d)),
            },
        };
        if omega.len() != dimension {
            return Err(CoreError::Domain(format!(
                "frequency has {} components in dimension {}",
                omega.len(),
                dimension
            )));
        }
        let tau = self.tau.unwrap_or(dimension as f64 + 1.0);
        match self.gamma {
            Some(g) => FrequencySpec::with_gamma(omega, tau, g),
            None => FrequencySpec::new(omega, tau, self.estimate_radius),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum ScheduleConfig {
    Theoretical {
        epsilon0: f64,
        num_scales: usize,
    },
    Practical {
        l1: u64,
        delta0: f64,
        num_scales: usize,
    },
}

impl ScheduleConfig {
    pub fn build(&self, epsilon: f64) -> Result<ScaleSchedule> {
        match self {
            Self::Theoretical {
                epsilon0,
                num_scales,
            } => ScaleSchedule::theoretical(epsilon, *epsilon0, *num_scales),
            Self::Practical {
                l1,
                delta0,
                num_scales,
            } => ScaleSchedule::practical(epsilon, *l1, *delta0, *num_scales),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_true")]
    pub insert_discontinuities: bool,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_samples() -> usize {
    4096
}
fn default_true() -> bool {
    true
}
fn default_offset() -> f64 {
    1e-9
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            insert_discontinuities: default_true(),
            offset: default_offset(),
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> ThetaGridSpec {
        ThetaGridSpec {
            samples: self.samples,
            insert_discontinuities: self.insert_discontinuities,
            offset: self.offset,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizeConfig {
    #[serde(default = "default_box_radius")]
    pub box_radius: i64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Poisson-formula spot checks per run.
    #[serde(default = "default_poisson_checks")]
    pub poisson_checks: usize,
}

fn default_box_radius() -> i64 {
    500
}
fn default_theta() -> f64 {
    0.3
}
fn default_poisson_checks() -> usize {
    20
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            box_radius: default_box_radius(),
            theta: default_theta(),
            poisson_checks: default_poisson_checks(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdlConfig {
    #[serde(default = "default_box_radius")]
    pub box_radius: i64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_t_samples")]
    pub t_samples: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_max_dist")]
    pub max_dist: i64,
}

fn default_t_samples() -> usize {
    64
}
fn default_t_max() -> f64 {
    1e6
}
fn default_pairs() -> usize {
    50
}
fn default_max_dist() -> i64 {
    100
}

impl Default for EdlConfig {
    fn default() -> Self {
        Self {
            box_radius: default_box_radius(),
            theta: default_theta(),
            t_samples: default_t_samples(),
            t_max: default_t_max(),
            pairs: default_pairs(),
            max_dist: default_max_dist(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchurIdentitiesConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_max_sites")]
    pub max_sites: usize,
    #[serde(default = "default_jump_instances")]
    pub jump_instances: usize,
}

fn default_instances() -> usize {
    500
}
fn default_max_sites() -> usize {
    12
}
fn default_jump_instances() -> usize {
    50
}

impl Default for SchurIdentitiesConfig {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            max_sites: default_max_sites(),
            jump_instances: default_jump_instances(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MsaVerifyConfig {
    /// Random (theta, E) draws for the good-set Green's sweep.
    #[serde(default = "default_goodset_draws")]
    pub goodset_draws: usize,
    /// Scale at which the good-set bounds are checked.
    #[serde(default = "default_goodset_scale")]
    pub goodset_scale: usize,
    /// Random extend/regularize property instances.
    #[serde(default = "default_set_instances")]
    pub set_instances: usize,
    #[serde(default = "default_probe_count")]
    pub theta_probes: usize,
}

fn default_goodset_draws() -> usize {
    200
}
fn default_goodset_scale() -> usize {
    1
}
fn default_set_instances() -> usize {
    200
}
fn default_probe_count() -> usize {
    64
}

impl Default for MsaVerifyConfig {
    fn default() -> Self {
        Self {
            goodset_draws: default_goodset_draws(),
            goodset_scale: default_goodset_scale(),
            set_instances: default_set_instances(),
            theta_probes: default_probe_count(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub frequency: FrequencyConfig,
    pub epsilon: f64,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub theta_grid: GridConfig,
    pub suites: Vec<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 picks the machine default.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub localize: LocalizeConfig,
    #[serde(default)]
    pub edl: EdlConfig,
    #[serde(default)]
    pub schur_identities: SchurIdentitiesConfig,
    #[serde(default)]
    pub msa_verify: MsaVerifyConfig,
}

fn default_output_dir() -> String {
    "out".to_string()
}
fn default_seed() -> u64 {
    42
}

pub const KNOWN_SUITES: [&str; 5] = [
    "rellich_scan",
    "msa_verify",
    "localize",
    "edl",
    "schur_identities",
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            format!(
                "config parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            )
        })?;
        for s in &cfg.suites {
            if !KNOWN_SUITES.contains(&s.as_str()) {
                return Err(format!(
                    "unknown suite {s:?}; known suites: {KNOWN_SUITES:?}"
                ));
            }
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<ModelParams> {
        let potential = self.potential.build()?;
        let freq = self.frequency.build(self.dimension)?;
        Ok(ModelParams::new(potential, freq, self.epsilon))
    }

    pub fn build_schedule(&self) -> Result<ScaleSchedule> {
        self.schedule.build(self.epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = r#"{
            "dimension": 1,
            "potential": {"family": "sawtooth"},
            "epsilon": 0.0,
            "schedule": {"regime": "practical", "l1": 4, "delta0": 5e-2, "num_scales": 1},
            "suites": ["rellich_scan"]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.theta_grid.samples, 4096);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.output_dir, "out");
        let params = cfg.model().unwrap();
        assert_eq!(params.dim(), 1);
        let schedule = cfg.build_schedule().unwrap();
        assert_eq!(schedule.length(1), 4);
    }

    #[test]
    fn unknown_suite_rejected() {
        let text = r#"{
            "dimension": 1,
            "potential": {"family": "sawtooth"},
            "epsilon": 0.0,
            "schedule": {"regime": "practical", "l1": 4, "delta0": 5e-2, "num_scales": 1},
            "suites": ["nonsense"]
        }"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(err.contains("unknown suite"));
    }

    #[test]
    fn parse_error_carries_position() {
        let err = ExperimentConfig::from_json("{ not json").unwrap_err();
        assert!(err.contains("line 1"));
    }
}
