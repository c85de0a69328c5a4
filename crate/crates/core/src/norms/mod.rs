//! Norms and distances of Hermitian-preserving maps.

mod diamond;
mod map;
mod report;
pub mod sdp;
mod search;
mod theta;

pub use diamond::{
    diamond_distance, diamond_solve, k_bounded_diamond_distance, witness_state, DiamondForm, DiamondOptions,
    DiamondSolution, DIAMOND_CAP, DIAMOND_TOL,
};
pub use map::{HermitianPreservingMap, MapStructure};
pub use report::{NormKind, NormReport};
pub use search::{
    evaluate_operator_norm, evaluate_spectral_norm, evaluate_trace_norm, one_to_infty_distance, one_to_one_distance,
    sampled_one_to_one, trace_norm_ascent, traceless_spectral_ascent, SearchOptions, Subspace,
};
pub use theta::{theta_distance_bounds, theta_k_bounded_estimate, theta_upper_bound, ThetaBounds, ThetaOptions, THETA_MAX_D};
