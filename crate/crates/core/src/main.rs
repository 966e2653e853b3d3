use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uav_resilience::config::parse_config;
use uav_resilience::error::Error;
use uav_resilience::output::{emit_results, summarize};
use uav_resilience::planner::PlannerSettings;
use uav_resilience::scenario::Scenario;
use uav_resilience::sim::{run_episode, sweep, EpisodeMetrics, Scheme};

const DEFAULT_MUS: [f64; 4] = [0.0, -2.0, -5.0, -10.0];
const ALL_SCHEMES: [&str; 4] = ["pro-alg", "sr-max", "baseline1", "baseline2"];

/// Resilient multi-UAV downlink planning with failure injection.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme on one seed.
    Run {
        #[command(flatten)]
        common: Common,
        /// pro-alg, sr-max, baseline1 or baseline2.
        #[arg(long, default_value = "pro-alg")]
        scheme: String,
        /// Risk parameter of pro-alg; defaults to the config value.
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every scheme over a grid of mu values and seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Schemes to include (comma separated); all by default.
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<String>,
        /// Risk parameters of pro-alg (comma separated).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = DEFAULT_MUS)]
        mu: Vec<f64>,
        /// Number of seeds; seed i is the scenario seed plus i.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Check a config file and exit.
    Validate {
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Plan against unit fading instead of the realized draws.
    #[arg(long)]
    expected_fading: bool,
    /// Leave realized rates before a replan out of its objective.
    #[arg(long)]
    no_history: bool,
}

impl Common {
    fn load(&self) -> Result<(Scenario, PlannerSettings), Error> {
        let (scenario, mut settings) = parse_config(&self.config)?;
        settings.expected_fading |= self.expected_fading;
        settings.history_in_objective &= !self.no_history;
        Ok((scenario, settings))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::Parse(_) => 1,
        Error::Solver { .. } | Error::InfeasibleLinearization(_) | Error::CorruptedPlan(_) | Error::FairnessUndefined => 2,
        Error::Io { .. } => 3,
    }
}

fn parse_scheme(name: &str, mu: f64) -> Result<Scheme, Error> {
    if !(mu <= 0.0 && mu.is_finite()) {
        return Err(Error::Parse(format!("mu must be finite and <= 0, got {mu}")));
    }
    Scheme::parse(name, mu).ok_or_else(|| Error::Parse(format!("unknown scheme {name:?}, expected one of {ALL_SCHEMES:?}")))
}

fn report(metrics: &[EpisodeMetrics], scenario: &Scenario, out: &Path) -> Result<(), Error> {
    let ids: Vec<u32> = scenario.users.iter().map(|u| u.id).collect();
    let files = emit_results(metrics, &ids, out)?;
    for s in summarize(metrics).schemes {
        println!(
            "{:<18} p1 {:>10.1} bps  var {:>12.4e}  jain {:.4}  iters {:.1}",
            s.key, s.avg_rate_p1, s.variance, s.jain, s.iterations
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { config } => {
            let (s, _) = parse_config(&config)?;
            println!(
                "{}: valid ({} UAVs, {} users, {} slots, {} failures)",
                config.display(),
                s.n_uavs(),
                s.n_users(),
                s.n_slots,
                s.failures.len()
            );
            Ok(())
        }
        Command::Run {
            common,
            scheme,
            mu,
            seed,
        } => {
            let (scenario, settings) = common.load()?;
            let scheme = parse_scheme(&scheme, mu.unwrap_or(settings.risk.mu()))?;
            let seed = seed.unwrap_or(scenario.seed);
            let scenario = scenario.with_seed(seed);
            let m = run_episode(&scenario, scheme, seed, &settings)?;
            report(&[m], &scenario, &common.out)
        }
        Command::Sweep {
            common,
            scheme,
            mu,
            seeds,
        } => {
            let (scenario, settings) = common.load()?;
            let names: Vec<&str> = if scheme.is_empty() {
                ALL_SCHEMES.to_vec()
            } else {
                scheme.iter().map(String::as_str).collect()
            };
            let mut schemes = Vec::new();
            for name in names {
                if name == "pro-alg" {
                    for &m in &mu {
                        schemes.push(parse_scheme(name, m)?);
                    }
                } else {
                    schemes.push(parse_scheme(name, 0.0)?);
                }
            }
            let seeds: Vec<u64> = (0..seeds).map(|i| scenario.seed + i).collect();
            let metrics = sweep(&scenario, &schemes, &seeds, &settings)?;
            report(&metrics, &scenario, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
