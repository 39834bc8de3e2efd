//! Exact inconsistency measurement for propositional knowledge bases, and
//! learned models that approximate the measures in constant time.
//!
//! * [`logic`]: formulas, knowledge bases, parsing and model enumeration.
//! * [`measures`]: minimal inconsistent subsets, `I_MI`, `I_at` and
//!   dataset statistics.
//! * [`datagen`]: seeded random knowledge bases and labeled datasets.
//! * [`encoding`]: bag-of-formulas feature vectors with flag columns.
//! * [`learners`]: OLS, ridge, lasso and a three-layer perceptron.
//! * [`experiments`]: cross-validation, runtime benchmark, scalability sweep.

pub mod datagen;
pub mod encoding;
pub mod experiments;
pub mod learners;
pub mod logic;
pub mod measures;

#[cfg(test)]
mod properties;

/// Environment variable overriding the default seed of the command-line tool.
pub const SEED_ENV: &str = "INCMETER_SEED";
