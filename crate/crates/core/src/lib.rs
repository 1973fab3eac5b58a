pub mod code;
pub mod codefile;
pub mod conditions;
pub mod decoder;
pub mod error;
pub mod kraus;
pub mod linalg;
pub mod random;
pub mod rational;
pub mod search;

pub use error::{Error, Result};

/// Default threshold for Hermiticity, trace and purity checks.
pub const NUM_TOL: f64 = 1e-10;
