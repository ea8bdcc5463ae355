//! Discovery of differential operators and their spatially varying
//! coefficients from forced boundary value problem data.
//!
//! Given a family of forcing/response pairs `L[u_j(x)] = f_j(x)` on a
//! shared grid, the crate assembles a candidate-function library, runs
//! group-sparse threshold ridge regression across a tolerance sweep, scores
//! the candidates with an information-criterion loss, and converts the
//! winning expansion into the operator `L` and its physical coefficient
//! fields. Synthetic data generation for four benchmark problems is
//! included so the whole pipeline can run end to end.

pub mod discovery;
pub mod error;
pub mod features;
mod linalg;
pub mod models;
pub mod regression;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
