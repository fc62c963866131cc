//! The coupled scalar state evolution.
//!
//! With `W` of shape `L_r x L_c`, undersampling `delta` and noise level
//! `sigma^2`, the recursion tracks one variance per row group and per
//! column group:
//!
//! ```text
//! phi_a(t)   = sigma^2 + (1/delta) sum_i W[a, i] psi_i(t)
//! psi_i(t+1) = mmse( sum_b W[b, i] / phi_b(t) )
//! ```
//!
//! started from `psi_i(0) = infinity`. The infinite start is kept as an
//! explicit sentinel row: `phi(0)` is set to infinity directly (never
//! computed from the sum, which would hit `0 * inf` on sparse `W`), and
//! `psi(1)` is the prior variance since the first effective snr is zero.

use crate::ensemble::CouplingMatrix;
use crate::priors::Prior;
use crate::{Error, Result};

/// Lower bound applied to `phi` so a noiseless, fully converged recursion
/// never divides by zero.
pub const DEFAULT_PHI_FLOOR: f64 = 1e-300;

/// The precomputed state-evolution schedule consumed by the AMP iteration.
#[derive(Debug, Clone)]
pub struct SeSchedule {
    phi: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
    delta: f64,
    noise_var: f64,
    coupling: CouplingMatrix,
    prior: Prior,
    converged_at: Option<usize>,
}

impl SeSchedule {
    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Iteration at which the max-norm psi change first dropped below the
    /// stopping tolerance, if it did within the horizon.
    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    /// Largest `t` with an explicitly computed row.
    pub fn horizon(&self) -> usize {
        self.phi.len() - 1
    }

    /// `phi(t)`, clamped to the fixed point beyond the computed horizon.
    pub fn phi_at(&self, t: usize) -> &[f64] {
        &self.phi[t.min(self.phi.len() - 1)]
    }

    /// `psi(t)`, clamped like [`Self::phi_at`].
    pub fn psi_at(&self, t: usize) -> &[f64] {
        &self.psi[t.min(self.psi.len() - 1)]
    }

    /// Effective snr per column group: `s_u(t) = sum_b W[b, u] / phi_b(t)`.
    ///
    /// At `t = 0` the sentinel `phi = inf` makes every term zero.
    pub fn effective_snr(&self, t: usize) -> Vec<f64> {
        let phi = self.phi_at(t);
        let w = self.coupling.entries();
        (0..self.coupling.lc())
            .map(|u| (0..self.coupling.lr()).map(|b| w[(b, u)] * phi[b].recip()).sum())
            .collect()
    }

    /// SE-predicted per-block mean square error of the iterate `x^t`,
    /// i.e. `mmse` at the effective snr from `phi(t - 1)`.
    pub fn predicted_block_mse(&self, block: usize, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::DimensionMismatch("prediction starts at t = 1".into()));
        }
        let s = self.effective_snr(t - 1);
        self.prior.mmse(s[block])
    }

    /// Writes the schedule as CSV rows `t, kind, index, value`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,kind,index,value")?;
        for (t, row) in self.phi.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                writeln!(out, "{t},phi,{a},{}", crate::harness::fmt_float(*v))?;
            }
        }
        for (t, row) in self.psi.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(out, "{t},psi,{i},{}", crate::harness::fmt_float(*v))?;
            }
        }
        Ok(())
    }
}

/// Runs the coupled recursion for up to `t_max` steps, stopping early once
/// `max_i |psi_i(t) - psi_i(t-1)| < stop_tol`.
pub fn coupled_se_run(
    w: &CouplingMatrix,
    delta: f64,
    noise_var: f64,
    prior: &Prior,
    t_max: usize,
    stop_tol: f64,
) -> Result<SeSchedule> {
    coupled_se_run_with_floor(w, delta, noise_var, prior, t_max, stop_tol, DEFAULT_PHI_FLOOR)
}

/// [`coupled_se_run`] with an explicit floor on `phi`.
pub fn coupled_se_run_with_floor(
    w: &CouplingMatrix,
    delta: f64,
    noise_var: f64,
    prior: &Prior,
    t_max: usize,
    stop_tol: f64,
    phi_floor: f64,
) -> Result<SeSchedule> {
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    if noise_var < 0.0 || !noise_var.is_finite() {
        return Err(Error::Config(format!("noise_var must be nonnegative, got {noise_var}")));
    }
    if t_max < 1 {
        return Err(Error::Config("t_max must be at least 1".into()));
    }
    let lr = w.lr();
    let lc = w.lc();
    let entries = w.entries();

    let mut phi = vec![vec![f64::INFINITY; lr]];
    let mut psi = vec![vec![f64::INFINITY; lc]];
    let mut converged_at = None;

    for t in 1..=t_max {
        // psi(t) from phi(t-1); the t = 1 step resolves the sentinel
        // analytically: zero effective snr gives the prior variance.
        let psi_t: Vec<f64> = if t == 1 {
            vec![prior.variance(); lc]
        } else {
            let phi_prev = &phi[t - 1];
            (0..lc)
                .map(|i| {
                    let s: f64 = (0..lr).map(|b| entries[(b, i)] * phi_prev[b].recip()).sum();
                    prior.mmse(s)
                })
                .collect::<Result<_>>()?
        };

        let phi_t: Vec<f64> = (0..lr)
            .map(|a| {
                let coupled: f64 = (0..lc).map(|i| entries[(a, i)] * psi_t[i]).sum();
                let v = noise_var + coupled / delta;
                if v < phi_floor {
                    log::warn!("phi[{a}]({t}) = {v} floored to {phi_floor}");
                    phi_floor
                } else {
                    v
                }
            })
            .collect();

        let change = psi[t - 1]
            .iter()
            .zip(&psi_t)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        psi.push(psi_t);
        phi.push(phi_t);
        if t >= 2 && change < stop_tol {
            converged_at = Some(t);
            break;
        }
    }

    Ok(SeSchedule {
        phi,
        psi,
        delta,
        noise_var,
        coupling: w.clone(),
        prior: prior.clone(),
        converged_at,
    })
}
