use clap::{Parser, Subcommand};
use mslab_cli::config::ExperimentConfig;
use mslab_core::msa::ScaleSchedule;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mslab",
    about = "Multi-scale spectral laboratory for quasi-periodic operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suites from a JSON config.
    Run {
        config: PathBuf,
        /// Run a single suite from the config.
        #[arg(long)]
        suite: Option<String>,
        /// Output directory (overrides OUTPUT_DIR and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides the config; 0 = machine default).
        #[arg(long)]
        jobs: Option<usize>,
        /// RNG seed for the randomized suites (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the scale-schedule table.
    Schedule {
        /// epsilon0 for the theoretical recurrences.
        epsilon0: Option<f64>,
        /// Practical mode: supply l1 and delta0 instead of epsilon0.
        #[arg(long, num_args = 2, value_names = ["L1", "DELTA0"])]
        practical: Option<Vec<f64>>,
        /// Number of scales.
        #[arg(short = 'N', long, default_value_t = 3)]
        num_scales: usize,
        /// Hopping strength used for the decay rates.
        #[arg(long)]
        epsilon: Option<f64>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            suite,
            out,
            jobs,
            seed,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", config.display()))?;
            let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| anyhow::anyhow!(e))?;
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out_dir = out
                .or_else(|| std::env::var_os("OUTPUT_DIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            mslab_cli::run_experiment(&cfg, suite.as_deref(), &out_dir)
        }
        Command::Schedule {
            epsilon0,
            practical,
            num_scales,
            epsilon,
        } => {
            let schedule = match (epsilon0, practical) {
                (Some(e0), None) => {
                    ScaleSchedule::theoretical(epsilon.unwrap_or(e0), e0, num_scales)?
                }
                (None, Some(p)) => {
                    let l1 = p[0] as u64;
                    ScaleSchedule::practical(epsilon.unwrap_or(1e-3), l1, p[1], num_scales)?
                }
                _ => anyhow::bail!("supply either EPSILON0 or --practical L1 DELTA0"),
            };
            print_schedule(&schedule);
            Ok(0)
        }
    }
}

fn print_schedule(s: &ScaleSchedule) {
    println!(
        "{:<6} {:>12} {:>24} {:>24} {:>24}",
        "scale", "length", "delta", "gamma", "budget"
    );
    for m in 0..=s.num_scales() {
        let len = if m == 0 {
            "-".to_string()
        } else {
            s.length(m).to_string()
        };
        println!(
            "{:<6} {:>12} {:>24e} {:>24e} {:>24e}",
            m,
            len,
            s.delta(m),
            s.gamma(m),
            s.tolerance_budget[m]
        );
    }
    println!(
        "gamma_inf = {:e}; rate condition (gamma_inf >= gamma_0/2 >= 10): {}",
        s.gamma_inf,
        if s.flags.rate_ok { "holds" } else { "fails" }
    );
    println!(
        "l strictly increasing: {}; delta strictly decreasing: {}; gamma non-increasing: {}",
        s.flags.l_strictly_increasing,
        s.flags.delta_strictly_decreasing,
        s.flags.gamma_nonincreasing
    );
}
