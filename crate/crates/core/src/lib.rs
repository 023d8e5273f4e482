//! Distributionally robust top-N recommendation selection.

pub mod baselines;
pub mod conic;
pub mod data;
pub mod dro;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod moments;
pub mod predictor;

pub use error::{Error, Result};
