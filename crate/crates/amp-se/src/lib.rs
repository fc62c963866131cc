//! Approximate message passing (AMP) for compressed sensing with spatially
//! coupled Gaussian sensing matrices, together with the state-evolution
//! recursions that predict its behavior and a Monte Carlo harness that
//! checks those predictions empirically.
//!
//! The crate is organized around five modules:
//!
//! * [`priors`] — scalar signal laws (atom + Gaussian mixtures) with exact
//!   posterior statistics: the Bayes denoiser, its derivative, `mmse(s)`
//!   by Gauss–Hermite quadrature, sampling, and the upper information
//!   dimension.
//! * [`ensemble`] — coupling matrices `W`, the block-variance sensing
//!   matrix ensemble, and the symmetric GOE-style ensemble.
//! * [`se`] — the coupled scalar state evolution `{phi, psi}`, the general
//!   matrix-valued recursion `{Sigma, Sigma_hat}`, and the diagonal
//!   identity that links them.
//! * [`amp`] — the compressed-sensing AMP iteration, the general symmetric
//!   orbit, the bipartite (rectangular) orbit, and the embedding that maps
//!   a CS instance onto a symmetric one.
//! * [`harness`] — config-driven experiment runner and CSV emission behind
//!   the `amp-se` command-line tool.
//!
//! All randomized operations are deterministic given their seed. With the
//! default `parallel` feature the data-parallel inner loops (trial batches,
//! Monte Carlo expectations, matrix sampling) run on rayon; reductions are
//! folded in a fixed order so results are bitwise independent of the
//! thread count. Disabling the feature yields a sequential build with
//! identical output.

pub mod amp;
pub mod ensemble;
mod error;
pub mod harness;
pub mod priors;
mod quad;
pub mod rng;
pub mod se;

pub use error::{Error, Result};
pub use quad::GaussHermite;
