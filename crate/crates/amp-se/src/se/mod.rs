//! State evolution: the coupled scalar recursion `{phi, psi}` driving the
//! compressed-sensing AMP, the general matrix-valued recursion
//! `{Sigma, Sigma_hat}` for symmetric orbits, and the diagonal identity
//! connecting the two.

mod coupled;
mod diagonal;
mod general;

pub use coupled::{coupled_se_run, coupled_se_run_with_floor, SeSchedule, DEFAULT_PHI_FLOOR};
pub use diagonal::{verify_diagonal_identity, DiagonalIdentityReport};
pub use general::{general_se_run, GeneralSeState, SideInfoSampler};
