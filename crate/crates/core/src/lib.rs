//! Non-strict projection lemma toolkit.
//!
//! Decides solvability of `Q + U^T X V + V^T X^T U >= 0` and constructs a
//! witness `X` when one exists. The same engine drives weak-Lyapunov
//! certificates for marginally stable discrete-time systems, interpolation
//! under a quadratic constraint, S-lemma multiplier searches and contractive
//! matrix completion.

pub mod dilation;
pub mod error;
pub mod linalg;
pub mod projection;
pub mod quadratic;
pub mod stability;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymMatrix, Tolerances};
