//! Equivalence and statistics checks: the three-orbit embedding identity
//! and the symmetric-orbit-vs-matrix-SE comparison.

use super::config::{ExperimentConfig, ExperimentKind};
use super::fmt_float;
use crate::amp::{
    bipartite_amp_run, build_embedding, cs_amp_run, symmetric_amp_run, CsProblem,
    ScalarNonlinearity, SymmetricAmpOptions, SymmetricInstance,
};
use crate::ensemble::sample_symmetric_matrix;
use crate::rng::{mix, substream};
use crate::se::{general_se_run, verify_diagonal_identity, DiagonalIdentityReport, SideInfoSampler};
use crate::{Error, Result};
use ndarray::Array2;
use rand::RngCore;

/// Deviations of each embedding identity, each relative to the largest
/// reference coordinate of its trajectory.
#[derive(Debug, Clone)]
pub struct EmbedCheckOutcome {
    pub config_hash: String,
    /// `u^t(g(i))` against the change-of-variables residual.
    pub bipartite_u_dev: f64,
    /// `v^{t+1}(g(j))` against the change-of-variables iterate.
    pub bipartite_v_dev: f64,
    /// Symmetric odd iterates against `u^{t+1}`, all coordinates.
    pub symmetric_u_dev: f64,
    /// Symmetric even iterates against `v^{t+1}`, all coordinates.
    pub symmetric_v_dev: f64,
    pub max_rel_deviation: f64,
    /// First `(index, t)` exceeding the tolerance, if any.
    pub first_offender: Option<(usize, usize)>,
    pub pass: bool,
    pub csv: String,
}

struct DevTracker {
    scale: f64,
    max: f64,
    first_offender: Option<(usize, usize)>,
    tol: f64,
}

impl DevTracker {
    fn new(scale: f64, tol: f64) -> DevTracker {
        DevTracker { scale: scale.max(1e-30), max: 0.0, first_offender: None, tol }
    }

    fn observe(&mut self, index: usize, t: usize, got: f64, want: f64) {
        let dev = (got - want).abs() / self.scale;
        if dev > self.max {
            self.max = dev;
        }
        if dev > self.tol && self.first_offender.is_none() {
            self.first_offender = Some((index, t));
        }
    }
}

fn trajectory_scale<'a>(arrays: impl Iterator<Item = &'a Array2<f64>>) -> f64 {
    arrays.flat_map(|a| a.iter()).fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Runs CS AMP, the bipartite orbit, and the symmetric orbit on one small
/// instance and reports the worst relative coordinate deviation across
/// the four exact identities.
pub fn run_embed_check(config: &ExperimentConfig) -> Result<EmbedCheckOutcome> {
    if config.kind != ExperimentKind::EmbedCheck {
        return Err(Error::Config("run_embed_check needs kind = embed_check".into()));
    }
    config.validate()?;
    let config_hash = config.hash()?;
    let spec = config.ensemble_spec()?;
    let t_max = config.iterations;
    let problem =
        CsProblem::sample(&spec, &config.prior, config.noise_var, t_max, config.base_seed)?;
    let cs = cs_amp_run(
        &problem.a,
        &problem.y,
        &problem.prior,
        problem.noise_var,
        &problem.schedule,
        t_max,
        Some(&problem.x),
    )?;
    let embedding = build_embedding(&problem, mix(config.base_seed, &[0xe3]))?;
    let bip = bipartite_amp_run(&embedding.bipartite, t_max)?;
    let sym = symmetric_amp_run(&embedding.symmetric, 2 * t_max, SymmetricAmpOptions::default())?;
    let tol = config.tolerances.embed_tol;
    let (m, n) = (embedding.m, embedding.n);

    // u^t(g(i)) = w_i - r^t_i for t >= 1.
    let u_scale = trajectory_scale(bip.us.iter());
    let mut u_dev = DevTracker::new(u_scale, tol);
    for t in 1..=t_max {
        let r_tilde = problem.r_tilde(&cs.rs[t - 1]);
        let u_t = &bip.us[t - 1];
        for i in 0..m {
            u_dev.observe(i, t, u_t[(i, spec.row_group(i))], r_tilde[i]);
        }
    }

    // v^{t+1}(g(j)) = x_j - (x^t + (Q^t .* A)^T r^t)_j for t >= 1.
    let v_scale = trajectory_scale(bip.vs.iter());
    let mut v_dev = DevTracker::new(v_scale, tol);
    for t in 1..=t_max {
        let x_tilde = problem.x_tilde_next(&cs.effective_obs[t - 1]);
        let v_next = &bip.vs[t];
        for j in 0..n {
            v_dev.observe(j, t, v_next[(j, spec.col_group(j))], x_tilde[j]);
        }
    }

    // Symmetric odd iterates reproduce u^{tau+1} on matrix rows, even
    // iterates reproduce v^{tau+1} on column rows, all q coordinates.
    let mut su_dev = DevTracker::new(u_scale, tol);
    let mut sv_dev = DevTracker::new(v_scale, tol);
    for tau in 0..t_max {
        let odd = &sym.xs[2 * tau + 1];
        let u_next = &bip.us[tau];
        for i in 0..m {
            for c in 0..u_next.ncols() {
                su_dev.observe(i, 2 * tau + 1, odd[(i, c)], u_next[(i, c)]);
            }
        }
        let even = &sym.xs[2 * tau];
        let v_next = &bip.vs[tau];
        for j in 0..n {
            for c in 0..v_next.ncols() {
                sv_dev.observe(m + j, 2 * tau, even[(m + j, c)], v_next[(j, c)]);
            }
        }
    }

    let max_rel_deviation =
        u_dev.max.max(v_dev.max).max(su_dev.max).max(sv_dev.max);
    let first_offender = u_dev
        .first_offender
        .or(v_dev.first_offender)
        .or(su_dev.first_offender)
        .or(sv_dev.first_offender);

    let mut csv = String::from("config_hash,identity,max_rel_deviation\n");
    for (name, dev) in [
        ("bipartite_u", u_dev.max),
        ("bipartite_v", v_dev.max),
        ("symmetric_u", su_dev.max),
        ("symmetric_v", sv_dev.max),
    ] {
        csv.push_str(&format!("{config_hash},{name},{}\n", fmt_float(dev)));
    }

    Ok(EmbedCheckOutcome {
        config_hash,
        bipartite_u_dev: u_dev.max,
        bipartite_v_dev: v_dev.max,
        symmetric_u_dev: su_dev.max,
        symmetric_v_dev: sv_dev.max,
        max_rel_deviation,
        first_offender,
        pass: first_offender.is_none(),
        csv,
    })
}

/// One test-statistic gate of the general-SE check.
#[derive(Debug, Clone)]
pub struct PsiGateResult {
    pub function: String,
    pub t: usize,
    pub empirical_mean: f64,
    pub empirical_std: f64,
    pub expected: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GeneralSeCheckOutcome {
    pub config_hash: String,
    pub psi_gates: Vec<PsiGateResult>,
    /// Worst relative deviation of the per-group empirical second moment
    /// from `Sigma^t`.
    pub moment_max_rel_dev: f64,
    pub diagonal: DiagonalIdentityReport,
    pub pass: bool,
    pub csv: String,
}

/// Gaussian expectation of a named statistic under `N(0, var)`.
fn gaussian_psi_expectation(function: &str, var: f64) -> f64 {
    match function {
        "x" => 0.0,
        "x2" => var,
        "abs" => (2.0 * var / std::f64::consts::PI).sqrt(),
        other => panic!("unknown test function {other}"),
    }
}

fn psi_value(function: &str, x: f64) -> f64 {
    match function {
        "x" => x,
        "x2" => x * x,
        "abs" => x.abs(),
        other => panic!("unknown test function {other}"),
    }
}

/// The bundled Lipschitz scalar instance: `g(x, y) = tanh(x) + y/2` with
/// Rademacher side information and all-ones start.
fn bundled_scalar_g() -> ScalarNonlinearity<
    impl Fn(f64, f64, usize) -> f64 + Sync,
    impl Fn(f64, f64, usize) -> f64 + Sync,
> {
    ScalarNonlinearity {
        f: |x, y, _| x.tanh() + 0.5 * y,
        df: |x, _, _| {
            let t = x.tanh();
            1.0 - t * t
        },
    }
}

fn rademacher(rng: &mut dyn RngCore) -> f64 {
    if (rng.next_u32() & 1) == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Runs symmetric orbits across seeds and compares group statistics with
/// the matrix SE; also verifies the diagonal identity on the config's
/// coupling.
pub fn run_general_se_check(config: &ExperimentConfig) -> Result<GeneralSeCheckOutcome> {
    if config.kind != ExperimentKind::GeneralSeCheck {
        return Err(Error::Config("run_general_se_check needs kind = general_se_check".into()));
    }
    config.validate()?;
    let config_hash = config.hash()?;
    let n = config.symmetric_n;
    let t_max = config.iterations;
    let seeds: Vec<u64> = (0..config.trials).map(|k| config.trial_seed(k)).collect();

    // Empirical side: per seed, per t, per statistic. Instances are large,
    // so seeds run one at a time; generation parallelizes internally.
    let mut emp: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); t_max]; config.test_functions.len()];
    let mut moments: Vec<Vec<f64>> = vec![Vec::new(); t_max];
    for &seed in &seeds {
        let mut rng = substream(seed, &[0x79]);
        let side: Array2<f64> =
            Array2::from_shape_fn((n, 1), |_| rademacher(&mut rng));
        let instance = SymmetricInstance {
            matrix: sample_symmetric_matrix(n, seed),
            groups: vec![0; n],
            side_info: side,
            initial: Array2::ones((n, 1)),
            nonlinearity: bundled_scalar_g(),
        };
        let trace = symmetric_amp_run(&instance, t_max, SymmetricAmpOptions::default())?;
        for t in 1..=t_max {
            let x = &trace.xs[t];
            for (fi, f) in config.test_functions.iter().enumerate() {
                let mean = x.column(0).iter().map(|&v| psi_value(f, v)).sum::<f64>() / n as f64;
                emp[fi][t - 1].push(mean);
            }
            moments[t - 1].push(trace.group_moments[t][0][(0, 0)]);
        }
    }

    // SE side: Sigma^t from the matrix recursion with the same g. The
    // all-ones start fixes SigmaHat^0 = E{ g(1, Y)^2 } exactly.
    let hat0 = {
        let t1 = 1.0f64.tanh();
        ndarray::array![[t1 * t1 + 0.25]]
    };
    let samplers: Vec<SideInfoSampler> =
        vec![Box::new(|rng: &mut dyn RngCore, out: &mut [f64]| out[0] = rademacher(rng))];
    let states = general_se_run(
        &[1.0],
        &samplers,
        &bundled_scalar_g(),
        &[hat0],
        t_max,
        config.mc_samples,
        mix(config.base_seed, &[0x5e]),
    )?;

    let tol = &config.tolerances;
    let mut psi_gates = Vec::new();
    let mut moment_max_rel_dev = 0.0f64;
    let mut pass = true;
    for t in 1..=t_max {
        let sigma = states[t - 1].sigma[(0, 0)];
        for (fi, f) in config.test_functions.iter().enumerate() {
            let vals = &emp[fi][t - 1];
            let nt = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / nt;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nt - 1.0)).sqrt()
            } else {
                0.0
            };
            let expected = gaussian_psi_expectation(f, sigma);
            let gate_pass = (mean - expected).abs() <= tol.sigma_mult * std;
            pass &= gate_pass;
            psi_gates.push(PsiGateResult {
                function: f.clone(),
                t,
                empirical_mean: mean,
                empirical_std: std,
                expected,
                pass: gate_pass,
            });
        }
        let mom_mean = moments[t - 1].iter().sum::<f64>() / moments[t - 1].len() as f64;
        let dev = (mom_mean - sigma).abs() / sigma;
        moment_max_rel_dev = moment_max_rel_dev.max(dev);
        pass &= dev <= tol.moment_tol;
    }

    // Diagonal identity on the config's coupling, capped at the exact
    // algebra range t <= 6 to bound the Monte Carlo cost.
    let diagonal = verify_diagonal_identity(
        &config.coupling.build()?,
        config.delta(),
        config.noise_var,
        &config.prior,
        t_max.min(6),
        config.mc_samples,
        mix(config.base_seed, &[0xd1]),
    )?;
    pass &= diagonal.max_rel_deviation <= tol.diag_tol;

    let mut csv = String::from("config_hash,function,t,empirical_mean,empirical_std,expected,pass\n");
    for g in &psi_gates {
        csv.push_str(&format!(
            "{config_hash},{},{},{},{},{},{}\n",
            g.function,
            g.t,
            fmt_float(g.empirical_mean),
            fmt_float(g.empirical_std),
            fmt_float(g.expected),
            g.pass
        ));
    }

    Ok(GeneralSeCheckOutcome {
        config_hash,
        psi_gates,
        moment_max_rel_dev,
        diagonal,
        pass,
        csv,
    })
}
