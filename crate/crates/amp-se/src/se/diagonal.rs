//! Cross-check between the two state-evolution recursions.
//!
//! On the symmetric embedding of a CS problem the matrix recursion's
//! diagonal must satisfy `1 / Sigma^{2t}[a, a] = sum_b W[b, a] / phi_b(t)`
//! for every column group `a`: the right side is the effective snr of the
//! coupled scalar recursion, the left comes from Monte Carlo expectations
//! of the embedded nonlinearity. Two independent implementations of the
//! same quantity.

use crate::amp::{compute_q, spatial_coupling_se_parts};
use crate::ensemble::CouplingMatrix;
use crate::priors::Prior;
use crate::se::general::general_se_run;
use crate::Result;

/// Deviations observed by [`verify_diagonal_identity`].
#[derive(Debug, Clone)]
pub struct DiagonalIdentityReport {
    /// Max over `(a, t)` of the relative deviation between the inverse
    /// diagonal and the coupled effective snr.
    pub max_rel_deviation: f64,
    /// Per `(block, t)` relative deviations.
    pub deviations: Vec<(usize, usize, f64)>,
    /// Max deviation of `sum_b W[b, a] Q~^t[b, a]` from one.
    pub q_identity_max_dev: f64,
}

/// Runs both recursions on the embedding of `(W, delta, sigma^2, prior)`
/// and reports the worst relative deviation over `a` and `t <= t_max`.
pub fn verify_diagonal_identity(
    w: &CouplingMatrix,
    delta: f64,
    noise_var: f64,
    prior: &Prior,
    t_max: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<DiagonalIdentityReport> {
    let parts = spatial_coupling_se_parts(w, delta, noise_var, prior, t_max)?;
    let states = general_se_run(
        &parts.fractions,
        &parts.samplers,
        &parts.g,
        &parts.sigma_hat0,
        2 * t_max,
        mc_samples,
        seed,
    )?;

    // The telescoping behind the identity rests on the weighted column
    // sums of Q~ being exactly one.
    let mut q_identity_max_dev = 0.0f64;
    for t in 1..=t_max {
        let q = compute_q(w, parts.schedule.phi_at(t))?;
        for a in 0..w.lc() {
            let sum: f64 = (0..w.lr()).map(|b| w.get(b, a) * q[(b, a)]).sum();
            q_identity_max_dev = q_identity_max_dev.max((sum - 1.0).abs());
        }
    }

    let mut deviations = Vec::new();
    let mut max_rel_deviation = 0.0f64;
    for t in 1..=t_max {
        // states[k] holds Sigma^{k+1}; Sigma^{2t} sits at index 2t - 1.
        let sigma = &states[2 * t - 1].sigma;
        let snr = parts.schedule.effective_snr(t);
        for a in 0..w.lc() {
            let lhs = sigma[(a, a)].recip();
            let rhs = snr[a];
            let dev = (lhs - rhs).abs() / rhs;
            deviations.push((a, t, dev));
            max_rel_deviation = max_rel_deviation.max(dev);
        }
    }

    Ok(DiagonalIdentityReport { max_rel_deviation, deviations, q_identity_max_dev })
}
