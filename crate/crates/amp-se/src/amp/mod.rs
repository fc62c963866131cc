//! The three AMP iterations and the embedding that ties them together.
//!
//! * [`cs_amp_run`] — compressed-sensing AMP on a block-variance sensing
//!   matrix, with block `Q` scaling, Bayes denoisers from the SE schedule,
//!   and the group-constant Onsager vector.
//! * [`symmetric_amp_run`] — the general symmetric orbit
//!   `x^{t+1} = A f(x^t; t) - B_t f(x^{t-1}; t-1)` with the averaged
//!   Jacobian Onsager operator.
//! * [`bipartite_amp_run`] — the paired rectangular orbit in `(u^t, v^t)`.
//! * [`build_embedding`] — maps a CS instance onto a symmetric instance
//!   whose alternating iterates reproduce both rectangular sequences.

mod bipartite;
mod cs;
mod embed;
mod nonlinearity;
mod symmetric;

pub use bipartite::{bipartite_amp_run, BipartiteInstance, BipartiteTrace};
pub use cs::{compute_onsager, compute_q, cs_amp_run, CsAmpState, CsTrace};
pub use embed::{
    build_embedding, spatial_coupling_se_parts, CsProblem, EmbedE, EmbedH, Embedding,
    SpatialCouplingG, SpatialCouplingSeParts,
};
pub use nonlinearity::{validate_jacobian, GroupNonlinearity, LinearByGroup, ScalarNonlinearity};
pub use symmetric::{symmetric_amp_run, OrbitTrace, SymmetricAmpOptions, SymmetricInstance};
