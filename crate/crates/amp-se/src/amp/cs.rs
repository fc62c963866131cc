//! Compressed-sensing AMP on a block-variance sensing matrix.
//!
//! The iteration (started from the constant prior-mean estimate) is
//!
//! ```text
//! r^t     = y - A x^t + b^t .* r^{t-1}
//! x^{t+1} = eta_t( x^t + (Q^t .* A)^T r^t )
//! ```
//!
//! with `r^0 = 0`, `Q^t` block-constant from the SE schedule, `eta_t` the
//! Bayes denoiser at the per-column-group effective snr, and `b^t`
//! group-constant from `Q^{t-1}` and the averaged denoiser derivatives.
//! The Hadamard product is realized blockwise; zero-variance blocks are
//! skipped entirely.

use crate::ensemble::{CouplingMatrix, SensingMatrix};
use crate::priors::Prior;
use crate::se::SeSchedule;
use crate::{Error, Result};
use ndarray::{s, Array1, Array2};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const DIVERGENCE_CAP: f64 = 1e12;

/// `Q~[r, u] = phi_r^{-1} / sum_k W[k, u] phi_k^{-1}`.
///
/// Weighted column sums satisfy `sum_r W[r, u] Q~[r, u] = 1` exactly.
pub fn compute_q(w: &CouplingMatrix, phi: &[f64]) -> Result<Array2<f64>> {
    if phi.len() != w.lr() {
        return Err(Error::DimensionMismatch(format!(
            "phi has {} entries for {} row groups",
            phi.len(),
            w.lr()
        )));
    }
    for (k, &p) in phi.iter().enumerate() {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidPhi { index: k, value: p });
        }
    }
    let inv: Vec<f64> = phi.iter().map(|p| p.recip()).collect();
    let mut q = Array2::zeros((w.lr(), w.lc()));
    for u in 0..w.lc() {
        let denom: f64 = (0..w.lr()).map(|k| w.get(k, u) * inv[k]).sum();
        if denom <= 0.0 {
            return Err(Error::ZeroQDenominator { column: u });
        }
        for r in 0..w.lr() {
            q[(r, u)] = inv[r] / denom;
        }
    }
    Ok(q)
}

/// Onsager coefficients, one per row group:
/// `b_r = (1/delta) sum_u W[r, u] Q~prev[r, u] <eta'>_u`.
pub fn compute_onsager(
    w: &CouplingMatrix,
    q_prev: &Array2<f64>,
    eta_prime_avgs: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    if q_prev.dim() != (w.lr(), w.lc()) || eta_prime_avgs.len() != w.lc() {
        return Err(Error::DimensionMismatch("onsager input shapes disagree with W".into()));
    }
    Ok((0..w.lr())
        .map(|r| {
            (0..w.lc())
                .map(|u| w.get(r, u) * q_prev[(r, u)] * eta_prime_avgs[u])
                .sum::<f64>()
                / delta
        })
        .collect())
}

/// Final AMP state after a run.
#[derive(Debug, Clone)]
pub struct CsAmpState {
    pub estimate: Array1<f64>,
    pub residual: Array1<f64>,
    pub iteration: usize,
    pub onsager: Vec<f64>,
    pub q_matrix: Array2<f64>,
    pub eta_prime_avgs: Vec<f64>,
}

/// Full per-iteration trace of a CS-AMP run.
#[derive(Debug, Clone)]
pub struct CsTrace {
    /// Estimates `x^1 .. x^{T+1}`; `xs[t - 1]` is `x^t`.
    pub xs: Vec<Array1<f64>>,
    /// Residuals `r^1 .. r^T`.
    pub rs: Vec<Array1<f64>>,
    /// Effective observations `x^t + (Q^t .* A)^T r^t` for `t = 1 .. T`.
    pub effective_obs: Vec<Array1<f64>>,
    /// Onsager coefficients `b^t` per row group, `t = 1 .. T` (`b^1 = 0`).
    pub onsager: Vec<Vec<f64>>,
    /// `<eta'_t>_u` per column group, `t = 1 .. T`.
    pub eta_prime_avgs: Vec<Vec<f64>>,
    /// `Q~^t`, `t = 1 .. T`.
    pub q_matrices: Vec<Array2<f64>>,
    /// Per-iterate per-column-group mean square error against the truth,
    /// for `x^1 .. x^{T+1}`, when the truth was supplied.
    pub block_mse: Option<Vec<Vec<f64>>>,
}

impl CsTrace {
    pub fn final_state(&self) -> CsAmpState {
        let t = self.rs.len();
        CsAmpState {
            estimate: self.xs.last().expect("trace has at least one iterate").clone(),
            residual: self.rs.last().expect("trace ran at least one step").clone(),
            iteration: t,
            onsager: self.onsager.last().cloned().unwrap_or_default(),
            q_matrix: self.q_matrices.last().cloned().unwrap_or_default(),
            eta_prime_avgs: self.eta_prime_avgs.last().cloned().unwrap_or_default(),
        }
    }
}

fn block_mse(x: &Array1<f64>, truth: &Array1<f64>, n0: usize, lc: usize) -> Vec<f64> {
    (0..lc)
        .map(|u| {
            let xs = x.slice(s![u * n0..(u + 1) * n0]);
            let ts = truth.slice(s![u * n0..(u + 1) * n0]);
            xs.iter().zip(ts).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n0 as f64
        })
        .collect()
}

/// Runs `t_max` AMP iterations against measurements `y`.
///
/// The schedule must come from the same `(W, delta, noise_var, prior)`;
/// `phi(t)` beyond the schedule's horizon clamps to the fixed point.
#[allow(clippy::too_many_arguments)]
pub fn cs_amp_run(
    a: &SensingMatrix,
    y: &Array1<f64>,
    prior: &Prior,
    noise_var: f64,
    schedule: &SeSchedule,
    t_max: usize,
    truth: Option<&Array1<f64>>,
) -> Result<CsTrace> {
    let spec = a.spec();
    let (m, n) = (spec.m(), spec.n());
    let (m0, n0) = (spec.m0(), spec.n0());
    let w = spec.coupling();
    let (lr, lc) = (w.lr(), w.lc());
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!("y has {} entries, expected {m}", y.len())));
    }
    if let Some(x) = truth {
        if x.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "truth has {} entries, expected {n}",
                x.len()
            )));
        }
    }
    if schedule.coupling() != w {
        return Err(Error::DimensionMismatch("schedule coupling differs from the matrix".into()));
    }
    if (schedule.delta() - spec.delta()).abs() > 1e-12 {
        return Err(Error::DimensionMismatch("schedule delta differs from m0/n0".into()));
    }
    if (schedule.noise_var() - noise_var).abs() > 1e-12 {
        return Err(Error::DimensionMismatch("schedule noise_var differs".into()));
    }
    if t_max < 1 {
        return Err(Error::Config("t_max must be at least 1".into()));
    }

    let delta = spec.delta();
    let values = a.values();
    let mut trace = CsTrace {
        xs: vec![Array1::from_elem(n, prior.mean())],
        rs: Vec::with_capacity(t_max),
        effective_obs: Vec::with_capacity(t_max),
        onsager: Vec::with_capacity(t_max),
        eta_prime_avgs: Vec::with_capacity(t_max),
        q_matrices: Vec::with_capacity(t_max),
        block_mse: truth.map(|_| Vec::new()),
    };

    let mut r_prev: Array1<f64> = Array1::zeros(m);
    for t in 1..=t_max {
        let x_t = trace.xs.last().expect("x^t present").clone();

        // b^t from Q~^{t-1} and <eta'_{t-1}>; zero at t = 1 where r^0 = 0.
        let b_t: Vec<f64> = if t == 1 {
            vec![0.0; lr]
        } else {
            compute_onsager(
                w,
                &trace.q_matrices[t - 2],
                &trace.eta_prime_avgs[t - 2],
                delta,
            )?
        };

        // r^t = y - A x^t + b^t .* r^{t-1}, accumulated blockwise so
        // zero-variance blocks cost nothing.
        let mut r_t = y.clone();
        for rg in 0..lr {
            let mut seg = r_t.slice_mut(s![rg * m0..(rg + 1) * m0]);
            for u in 0..lc {
                if w.get(rg, u) == 0.0 {
                    continue;
                }
                let block = values.slice(s![rg * m0..(rg + 1) * m0, u * n0..(u + 1) * n0]);
                let xu = x_t.slice(s![u * n0..(u + 1) * n0]);
                seg -= &block.dot(&xu);
            }
            if b_t[rg] != 0.0 {
                let prev = r_prev.slice(s![rg * m0..(rg + 1) * m0]);
                seg.zip_mut_with(&prev, |ri, &pi| *ri += b_t[rg] * pi);
            }
        }
        check_finite(&r_t, t, "residual")?;

        // Effective observation x^t + (Q^t .* A)^T r^t, blockwise.
        let q_t = compute_q(w, schedule.phi_at(t))?;
        let mut v_t = x_t.clone();
        for u in 0..lc {
            let mut seg = v_t.slice_mut(s![u * n0..(u + 1) * n0]);
            for rg in 0..lr {
                if w.get(rg, u) == 0.0 {
                    continue;
                }
                let block = values.slice(s![rg * m0..(rg + 1) * m0, u * n0..(u + 1) * n0]);
                let rseg = r_t.slice(s![rg * m0..(rg + 1) * m0]);
                let prod = block.t().dot(&rseg);
                seg.zip_mut_with(&prod, |vi, &pi| *vi += q_t[(rg, u)] * pi);
            }
        }
        check_finite(&v_t, t, "effective observation")?;

        // x^{t+1} = eta_t(v^t) with per-group snr; derivative averages
        // are folded per group afterwards to keep reductions ordered.
        let snr = schedule.effective_snr(t);
        let v_slice = v_t.as_slice().expect("contiguous");
        let denoise_one = |(j, &vj): (usize, &f64)| {
            let stats = prior.posterior(vj, snr[j / n0]);
            (stats.mean, stats.mean_derivative)
        };
        #[cfg(feature = "parallel")]
        let pairs: Vec<(f64, f64)> = v_slice.par_iter().enumerate().map(denoise_one).collect();
        #[cfg(not(feature = "parallel"))]
        let pairs: Vec<(f64, f64)> = v_slice.iter().enumerate().map(denoise_one).collect();

        let mut x_next = Array1::zeros(n);
        let mut eta_avgs = vec![0.0; lc];
        for (j, &(mean, deriv)) in pairs.iter().enumerate() {
            x_next[j] = mean;
            eta_avgs[j / n0] += deriv;
        }
        for avg in &mut eta_avgs {
            *avg /= n0 as f64;
        }

        trace.rs.push(r_t.clone());
        trace.effective_obs.push(v_t);
        trace.onsager.push(b_t);
        trace.eta_prime_avgs.push(eta_avgs);
        trace.q_matrices.push(q_t);
        trace.xs.push(x_next);
        r_prev = r_t;
    }

    if let Some(x) = truth {
        trace.block_mse =
            Some(trace.xs.iter().map(|xt| block_mse(xt, x, n0, lc)).collect());
    }
    Ok(trace)
}

fn check_finite(v: &Array1<f64>, t: usize, what: &str) -> Result<()> {
    for &x in v.iter() {
        if !x.is_finite() || x.abs() > DIVERGENCE_CAP {
            return Err(Error::Divergence { iteration: t, what: format!("{what} entry {x}") });
        }
    }
    Ok(())
}
