//! Command-line front end for the experiment harness.
//!
//! ```text
//! amp-se run      <config.toml>   # cs_mc or se_only
//! amp-se sweep    <config.toml>   # kind = sweep
//! amp-se check embed <config.toml>
//! amp-se check se    <config.toml>
//! amp-se validate <config.toml>   # lint only
//! ```
//!
//! Exit code 0 iff every configured tolerance gate passed.

use amp_se::harness::{
    run_cs_monte_carlo, run_delta_sweep, run_embed_check, run_general_se_check, run_se_only,
    ExperimentConfig, ExperimentKind,
};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "amp-se", about = "AMP / state-evolution experiment harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Override the config's output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a cs_mc or se_only experiment.
    Run { config: PathBuf },
    /// Run an undersampling sweep with bisection.
    Sweep { config: PathBuf },
    /// Run an equivalence or statistics check.
    Check {
        #[arg(value_enum)]
        which: CheckKind,
        config: PathBuf,
    },
    /// Lint a config file without running it.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckKind {
    /// Exact three-orbit equivalence.
    Embed,
    /// Symmetric-orbit statistics vs the matrix SE.
    Se,
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, amp_se::Error> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn write_output(config: &ExperimentConfig, csv: &str) -> Result<(), amp_se::Error> {
    match &config.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, amp_se::Error> {
    match &cli.command {
        Command::Run { config } => {
            let config = load(config, cli)?;
            match config.kind {
                ExperimentKind::CsMc => {
                    let outcome = run_cs_monte_carlo(&config)?;
                    write_output(&config, &outcome.csv)?;
                    for (seed, err) in &outcome.failed_trials {
                        eprintln!("trial seed {seed} failed: {err}");
                    }
                    for (t, block, emp, pred, allowed) in &outcome.gate_failures {
                        eprintln!(
                            "gate failure at t={t} block={block}: empirical {emp} vs predicted {pred} (allowance {allowed})"
                        );
                    }
                    eprintln!(
                        "cs_mc [{}]: {} trials, {} gate failures",
                        outcome.config_hash,
                        outcome.trials.len(),
                        outcome.gate_failures.len()
                    );
                    Ok(outcome.passed())
                }
                ExperimentKind::SeOnly => {
                    let (schedule, csv) = run_se_only(&config)?;
                    write_output(&config, &csv)?;
                    eprintln!(
                        "se_only: horizon {}, converged at {:?}",
                        schedule.horizon(),
                        schedule.converged_at()
                    );
                    Ok(true)
                }
                other => Err(amp_se::Error::Config(format!(
                    "`run` handles cs_mc and se_only, config says {other:?}; use the matching subcommand"
                ))),
            }
        }
        Command::Sweep { config } => {
            let config = load(config, cli)?;
            let outcome = run_delta_sweep(&config)?;
            write_output(&config, &outcome.csv)?;
            match outcome.critical_delta {
                Some(c) => eprintln!("critical delta ~ {c}"),
                None => eprintln!("grid endpoints do not bracket a threshold"),
            }
            Ok(true)
        }
        Command::Check { which, config } => {
            let config = load(config, cli)?;
            match which {
                CheckKind::Embed => {
                    let outcome = run_embed_check(&config)?;
                    write_output(&config, &outcome.csv)?;
                    eprintln!(
                        "embed check: max relative deviation {}",
                        outcome.max_rel_deviation
                    );
                    if let Some((i, t)) = outcome.first_offender {
                        eprintln!("first offending coordinate: index {i}, t {t}");
                    }
                    Ok(outcome.pass)
                }
                CheckKind::Se => {
                    let outcome = run_general_se_check(&config)?;
                    write_output(&config, &outcome.csv)?;
                    eprintln!(
                        "general SE check: moment dev {}, diagonal dev {}, {} psi gates",
                        outcome.moment_max_rel_dev,
                        outcome.diagonal.max_rel_deviation,
                        outcome.psi_gates.len()
                    );
                    for g in outcome.psi_gates.iter().filter(|g| !g.pass) {
                        eprintln!(
                            "psi gate failure: {} at t={} empirical {} expected {}",
                            g.function, g.t, g.empirical_mean, g.expected
                        );
                    }
                    Ok(outcome.pass)
                }
            }
        }
        Command::Validate { config } => {
            let config = load(config, cli)?;
            config.validate()?;
            eprintln!("config ok: hash {}", config.hash()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("could not size the thread pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some() {
        eprintln!("built without the `parallel` feature; --threads ignored");
    }

    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
