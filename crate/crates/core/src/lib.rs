//! Optimal stopping for the secretary problem when a limited number of
//! queries can be put to an expert whose answers are noisy.
//!
//! [`solver`] computes the value tables and threshold strategy, [`policy`]
//! runs a strategy over an arrival sequence, [`sim`] estimates success rates
//! by Monte Carlo and [`oracle`] checks small cases by exact enumeration.

pub mod cli;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod sim;
pub mod solver;

pub use model::{ModelConfig, ModelError, ProblemSpec, ResponseModel};
pub use numeric::{NumericMode, Scalar};
pub use solver::{compute_tables, extract_thresholds, solve, ThresholdSet, ValueTables};
