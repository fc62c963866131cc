//! Monte Carlo trials against SE predictions, SE-only runs, and the
//! undersampling sweep with bisection.

use super::config::{ExperimentConfig, ExperimentKind};
use super::fmt_float;
use crate::amp::cs_amp_run;
use crate::ensemble::{sample_sensing_matrix, CouplingMatrix, EnsembleSpec};
use crate::priors::Prior;
use crate::rng::substream;
use crate::se::{coupled_se_run, SeSchedule};
use crate::{Error, Result};
use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use std::time::{Duration, Instant};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Trials whose matrices fit under this entry count run concurrently;
/// larger instances run one at a time with parallel inner kernels, which
/// bounds peak memory at one matrix.
const PARALLEL_TRIAL_MAX_ENTRIES: usize = 8_000_000;

/// One AMP trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    /// Empirical per-block MSE of `x^t`, indexed `[t - 1][block]`.
    pub block_mse: Vec<Vec<f64>>,
    /// SE-predicted per-block MSE, identical across trials.
    pub predicted: Vec<Vec<f64>>,
    pub wall_time: Duration,
}

/// Aggregated outcome of a `cs_mc` run.
#[derive(Debug, Clone)]
pub struct CsMcOutcome {
    pub config_hash: String,
    pub trials: Vec<TrialResult>,
    /// Cross-trial mean per `(t, block)`.
    pub mean_mse: Vec<Vec<f64>>,
    /// Cross-trial standard deviation per `(t, block)`.
    pub std_mse: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    /// Gate violations `(t, block, empirical, predicted, allowance)`.
    pub gate_failures: Vec<(usize, usize, f64, f64, f64)>,
    /// Trials that errored, with the message; excluded from aggregates.
    pub failed_trials: Vec<(u64, String)>,
    pub csv: String,
}

impl CsMcOutcome {
    pub fn passed(&self) -> bool {
        self.gate_failures.is_empty() && self.failed_trials.is_empty()
    }
}

fn run_one_trial(
    spec: &EnsembleSpec,
    prior: &Prior,
    noise_var: f64,
    schedule: &SeSchedule,
    t_max: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let a = sample_sensing_matrix(spec, seed)?;
    let x = Array1::from(prior.sample(spec.n(), crate::rng::mix(seed, &[2])));
    let mut rng = substream(seed, &[3]);
    let w: Array1<f64> = (0..spec.m())
        .map(|_| rng.sample::<f64, _>(StandardNormal) * noise_var.sqrt())
        .collect();
    let y = a.values().dot(&x) + &w;
    let trace = cs_amp_run(&a, &y, prior, noise_var, schedule, t_max, Some(&x))?;
    let mse = trace.block_mse.expect("truth was supplied");
    Ok(mse[..t_max].to_vec())
}

/// Runs `trials` independent AMP instances and gates the per-(t, block)
/// empirical MSE against the SE prediction.
pub fn run_cs_monte_carlo(config: &ExperimentConfig) -> Result<CsMcOutcome> {
    if config.kind != ExperimentKind::CsMc {
        return Err(Error::Config("run_cs_monte_carlo needs kind = cs_mc".into()));
    }
    config.validate()?;
    let config_hash = config.hash()?;
    let spec = config.ensemble_spec()?;
    let prior = &config.prior;
    let t_max = config.iterations;
    let schedule = coupled_se_run(
        spec.coupling(),
        spec.delta(),
        config.noise_var,
        prior,
        t_max,
        0.0,
    )?;
    let predicted: Vec<Vec<f64>> = (1..=t_max)
        .map(|t| {
            (0..spec.coupling().lc())
                .map(|a| schedule.predicted_block_mse(a, t))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let seeds: Vec<u64> = (0..config.trials).map(|k| config.trial_seed(k)).collect();
    let run_seed = |&seed: &u64| -> (u64, Duration, Result<Vec<Vec<f64>>>) {
        let start = Instant::now();
        let out = run_one_trial(&spec, prior, config.noise_var, &schedule, t_max, seed);
        (seed, start.elapsed(), out)
    };
    // Aggregation folds in trial order either way.
    #[cfg(feature = "parallel")]
    let raw: Vec<_> = if spec.m() * spec.n() <= PARALLEL_TRIAL_MAX_ENTRIES {
        seeds.par_iter().map(run_seed).collect()
    } else {
        seeds.iter().map(run_seed).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let raw: Vec<_> = seeds.iter().map(run_seed).collect();

    let mut trials = Vec::new();
    let mut failed_trials = Vec::new();
    for (seed, wall_time, out) in raw {
        match out {
            Ok(block_mse) => trials.push(TrialResult {
                seed,
                block_mse,
                predicted: predicted.clone(),
                wall_time,
            }),
            Err(e) => failed_trials.push((seed, e.to_string())),
        }
    }
    if trials.is_empty() {
        return Err(Error::Config("every trial failed".into()));
    }

    let lc = spec.coupling().lc();
    let nt = trials.len() as f64;
    let mut mean_mse = vec![vec![0.0; lc]; t_max];
    for trial in &trials {
        for t in 0..t_max {
            for b in 0..lc {
                mean_mse[t][b] += trial.block_mse[t][b] / nt;
            }
        }
    }
    let mut std_mse = vec![vec![0.0; lc]; t_max];
    if trials.len() > 1 {
        for trial in &trials {
            for t in 0..t_max {
                for b in 0..lc {
                    let d = trial.block_mse[t][b] - mean_mse[t][b];
                    std_mse[t][b] += d * d / (nt - 1.0);
                }
            }
        }
        for row in &mut std_mse {
            for v in row.iter_mut() {
                *v = v.sqrt();
            }
        }
    }

    let tol = &config.tolerances;
    let mut gate_failures = Vec::new();
    for t in 0..t_max {
        for b in 0..lc {
            let allowed = (tol.rel_tol * predicted[t][b]).max(tol.sigma_mult * std_mse[t][b]);
            if (mean_mse[t][b] - predicted[t][b]).abs() > allowed {
                gate_failures.push((t + 1, b, mean_mse[t][b], predicted[t][b], allowed));
            }
        }
    }

    let mut csv = String::from("config_hash,seed,t,block,mse_emp,mse_se,rel_err\n");
    for trial in &trials {
        for t in 0..t_max {
            for b in 0..lc {
                let emp = trial.block_mse[t][b];
                let se = predicted[t][b];
                let rel = (emp - se).abs() / se;
                csv.push_str(&format!(
                    "{config_hash},{},{},{b},{},{},{}\n",
                    trial.seed,
                    t + 1,
                    fmt_float(emp),
                    fmt_float(se),
                    fmt_float(rel)
                ));
            }
        }
    }

    Ok(CsMcOutcome {
        config_hash,
        trials,
        mean_mse,
        std_mse,
        predicted,
        gate_failures,
        failed_trials,
        csv,
    })
}

/// Runs the coupled SE alone and returns the schedule plus its CSV form.
pub fn run_se_only(config: &ExperimentConfig) -> Result<(SeSchedule, String)> {
    config.validate()?;
    let spec = config.ensemble_spec()?;
    let schedule = coupled_se_run(
        spec.coupling(),
        spec.delta(),
        config.noise_var,
        &config.prior,
        config.iterations,
        config.stop_tol,
    )?;
    let mut buf = Vec::new();
    schedule.write_csv(&mut buf)?;
    let csv = String::from_utf8(buf).expect("csv is utf-8");
    Ok((schedule, csv))
}

/// One sweep grid row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub delta: f64,
    pub max_block_mse: f64,
    pub iterations: usize,
    pub reconstructed: bool,
}

/// Outcome of a delta sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
    /// Bisection estimate of the reconstruction threshold, if the grid
    /// endpoints bracket one.
    pub critical_delta: Option<f64>,
    pub csv: String,
}

fn converged_max_mse(
    w: &CouplingMatrix,
    delta: f64,
    noise_var: f64,
    prior: &Prior,
    t_max: usize,
    stop_tol: f64,
) -> Result<(f64, usize)> {
    let sched = coupled_se_run(w, delta, noise_var, prior, t_max, stop_tol)?;
    let last = sched.horizon();
    let max = sched.psi_at(last).iter().cloned().fold(0.0f64, f64::max);
    Ok((max, last))
}

/// Sweeps the SE over an undersampling grid and bisects the threshold.
pub fn run_delta_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    if config.kind != ExperimentKind::Sweep {
        return Err(Error::Config("run_delta_sweep needs kind = sweep".into()));
    }
    config.validate()?;
    let config_hash = config.hash()?;
    let sweep = config.sweep.as_ref().expect("validated");
    let w = config.coupling.build()?;
    let prior = &config.prior;

    let grid: Vec<f64> = (0..sweep.points)
        .map(|k| {
            sweep.delta_min
                + (sweep.delta_max - sweep.delta_min) * k as f64 / (sweep.points - 1) as f64
        })
        .collect();
    let eval = |delta: f64| -> Result<(f64, usize)> {
        converged_max_mse(&w, delta, config.noise_var, prior, sweep.max_iterations, config.stop_tol)
    };
    #[cfg(feature = "parallel")]
    let evaluated: Vec<Result<(f64, usize)>> = grid.par_iter().map(|&d| eval(d)).collect();
    #[cfg(not(feature = "parallel"))]
    let evaluated: Vec<Result<(f64, usize)>> = grid.iter().map(|&d| eval(d)).collect();

    let mut rows = Vec::with_capacity(grid.len());
    for (delta, res) in grid.iter().zip(evaluated) {
        let (max_block_mse, iterations) = res?;
        rows.push(SweepRow {
            delta: *delta,
            max_block_mse,
            iterations,
            reconstructed: max_block_mse <= sweep.mse_threshold,
        });
    }

    // Bisection needs a failing low end and a succeeding high end.
    let critical_delta = if !rows.first().expect("grid nonempty").reconstructed
        && rows.last().expect("grid nonempty").reconstructed
    {
        let (mut lo, mut hi) = (sweep.delta_min, sweep.delta_max);
        while hi - lo > sweep.bisection_tol {
            let mid = 0.5 * (lo + hi);
            if eval(mid)?.0 <= sweep.mse_threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(0.5 * (lo + hi))
    } else {
        None
    };

    let mut csv = String::from("config_hash,kind,delta,max_block_mse,iterations\n");
    for row in &rows {
        csv.push_str(&format!(
            "{config_hash},grid,{},{},{}\n",
            fmt_float(row.delta),
            fmt_float(row.max_block_mse),
            row.iterations
        ));
    }
    if let Some(c) = critical_delta {
        csv.push_str(&format!("{config_hash},critical,{},,\n", fmt_float(c)));
    }

    Ok(SweepOutcome { config_hash, rows, critical_delta, csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{BandConfig, CouplingConfig};
    use crate::harness::config::Tolerances;

    fn mc_config() -> ExperimentConfig {
        ExperimentConfig {
            kind: ExperimentKind::CsMc,
            prior: Prior::unit_gaussian(),
            coupling: CouplingConfig::Band {
                band: BandConfig { lr: 1, lc: 1, profile: vec![1.0] },
            },
            m0: 250,
            n0: 500,
            noise_var: 0.05,
            iterations: 5,
            trials: 8,
            base_seed: 11,
            out: None,
            sweep: None,
            tolerances: Tolerances::default(),
            stop_tol: 1e-10,
            mc_samples: 10_000,
            symmetric_n: 100,
            test_functions: vec!["x".into()],
        }
    }

    #[test]
    fn monte_carlo_first_iteration_matches_prior_variance() {
        let config = mc_config();
        let outcome = run_cs_monte_carlo(&config).unwrap();
        // t = 1: the estimate is the constant prior mean, so block MSE is
        // the prior variance up to sampling noise.
        let emp = outcome.mean_mse[0][0];
        assert!((emp - 1.0).abs() < 0.05, "t=1 mse {emp}");
        assert!(outcome.failed_trials.is_empty());
        assert_eq!(outcome.predicted[0][0], 1.0);
    }

    #[test]
    fn monte_carlo_tracks_se_for_gaussian_prior() {
        let config = mc_config();
        let outcome = run_cs_monte_carlo(&config).unwrap();
        assert!(
            outcome.gate_failures.is_empty(),
            "failures: {:?}",
            outcome.gate_failures
        );
    }

    #[test]
    fn monte_carlo_is_bit_reproducible() {
        let config = mc_config();
        let a = run_cs_monte_carlo(&config).unwrap();
        let b = run_cs_monte_carlo(&config).unwrap();
        assert_eq!(a.csv, b.csv);
    }

    #[test]
    fn predictions_are_trial_invariant() {
        let outcome = run_cs_monte_carlo(&mc_config()).unwrap();
        for trial in &outcome.trials {
            assert_eq!(trial.predicted, outcome.predicted);
        }
    }

    #[test]
    fn sweep_locates_gaussian_threshold_absence() {
        // Fully continuous prior: no reconstruction below threshold at
        // sigma^2 > 0, MSE decreasing in delta, no critical point.
        let mut config = mc_config();
        config.kind = ExperimentKind::Sweep;
        config.noise_var = 1e-3;
        config.sweep = Some(SweepConfig {
            delta_min: 0.2,
            delta_max: 0.9,
            points: 5,
            mse_threshold: 1e-4,
            bisection_tol: 1e-3,
            max_iterations: 500,
            mc_confirm: vec![],
        });
        let outcome = run_delta_sweep(&config).unwrap();
        assert!(outcome.critical_delta.is_none());
        for pair in outcome.rows.windows(2) {
            assert!(
                pair[1].max_block_mse < pair[0].max_block_mse,
                "MSE not decreasing in delta"
            );
            assert!(pair[0].max_block_mse > 1e-4);
        }
    }

    #[test]
    fn sweep_brackets_bernoulli_gaussian_threshold() {
        let mut config = mc_config();
        config.kind = ExperimentKind::Sweep;
        config.prior = Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap();
        config.noise_var = 1e-6;
        config.sweep = Some(SweepConfig {
            delta_min: 0.05,
            delta_max: 0.8,
            points: 4,
            mse_threshold: 1e-3,
            bisection_tol: 2e-3,
            max_iterations: 1500,
            mc_confirm: vec![],
        });
        let outcome = run_delta_sweep(&config).unwrap();
        let crit = outcome.critical_delta.expect("endpoints bracket the threshold");
        assert!(crit > 0.1 && crit < 0.8, "critical delta {crit}");
    }
}
