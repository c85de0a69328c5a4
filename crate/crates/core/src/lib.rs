//! Exact and sub-sampled unitary designs, twirl certification, and
//! distance computations between quantum channels.

pub mod crypto;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod norms;
pub mod schur_weyl;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Operator, StateVector, TensorShape, C64};
