//! Variational computation of Aubry-Mather `beta` and `alpha` functions for
//! exact twist maps, with mode-locking, hyperbolicity and flatness diagnostics.

pub mod error;
pub mod flatness;
pub mod linalg;
pub mod hyperbolicity;
pub mod model;
pub mod staircase;
pub mod variational;

pub use error::{Error, Result};
pub use model::{GeneratingModel, Harmonic};
