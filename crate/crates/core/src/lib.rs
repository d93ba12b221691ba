//! Symbolic regression by genetic programming with memetic
//! Levenberg-Marquardt parameter fitting, instrumented to record the numeric
//! rank and condition number of every local-optimization Jacobian.
//!
//! The crate is split along the data flow of an experiment:
//!
//! - [`expr`]: expression trees, evaluation, parameter slots, infix text form.
//! - [`diff`]: forward-mode Jacobian of the residual vector.
//! - [`conditioning`]: SVD spectrum, numeric rank and condition numbers.
//! - [`nls`]: trust-region Levenberg-Marquardt with per-iteration reports.
//! - [`gp`]: tree-based GP (balanced creation, subtree crossover, mutation,
//!   tournament selection, generational replacement with elitism).
//! - [`data`]: benchmark generators and CSV ingestion.
//! - [`telemetry`]: per-candidate worst-case records, per-generation
//!   percentiles, CSV and SVG output.
//! - [`cli`]: the experiment runner behind the `srcond` binary.

pub mod cli;
pub mod conditioning;
pub mod data;
pub mod diff;
mod error;
pub mod expr;
pub mod gp;
pub mod nls;
pub mod rng;
pub mod telemetry;

pub use error::{Error, Result};
