//! Experiment protocol: k-fold cross-validation with a per-fold validation
//! split and grid search, a solver-vs-learner runtime benchmark, and a
//! training-set-size sweep.

mod bench;
mod cv;
mod scale;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::DatasetError;
use crate::encoding::{EncodingError, FlagOptions};
use crate::learners::{ConstraintWeighting, LearnerError, TABLE3_ALPHAS};
use crate::measures::{Measure, MeasureError};

pub use bench::{run_bench, BenchOptions, BenchReport, BenchRow};
pub use cv::{make_folds, run_cv, run_cv_with, CvReport, FoldReport, FoldSplit, Learner, StandardLearner, Visit};
pub use scale::{run_scalability, ScaleReport, ScaleRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Ridge,
    Lasso,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ols => "ols",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ols" | "lr" | "linear" => Ok(ModelKind::Ols),
            "ridge" => Ok(ModelKind::Ridge),
            "lasso" => Ok(ModelKind::Lasso),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(format!("unknown model {other:?} (expected ols, ridge, lasso or mlp)")),
        }
    }
}

/// Which symbolic knowledge a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Formula bits only.
    Plain,
    /// Formula bits plus flag columns.
    Flags,
    /// Flag columns plus the flag-weighted loss (MLP only).
    FlagsConstraints,
}

impl Variant {
    pub fn flag_options(self, target: Measure) -> FlagOptions {
        match self {
            Variant::Plain => FlagOptions::NONE,
            Variant::Flags | Variant::FlagsConstraints => FlagOptions::all_for(target),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::Flags => "flags",
            Variant::FlagsConstraints => "flags-constraints",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "no-flags" | "no_flags" => Ok(Variant::Plain),
            "flags" => Ok(Variant::Flags),
            "flags-constraints" | "flags_constraints" => Ok(Variant::FlagsConstraints),
            other => Err(format!("unknown variant {other:?} (expected plain, flags or flags-constraints)")),
        }
    }
}

/// Hyperparameter values searched per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub alphas: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub hidden_sizes: Vec<usize>,
}

impl Grid {
    /// Full search ranges: ten strengths for ridge/lasso, 3 x 3 x 3 for the MLP.
    pub fn table3() -> Self {
        Grid {
            alphas: TABLE3_ALPHAS.to_vec(),
            learning_rates: crate::learners::TABLE3_LEARNING_RATES.to_vec(),
            weight_decays: crate::learners::TABLE3_WEIGHT_DECAYS.to_vec(),
            hidden_sizes: crate::learners::TABLE3_HIDDEN.to_vec(),
        }
    }

    /// The middle value of each range.
    pub fn reduced() -> Self {
        Grid { alphas: vec![1.0], learning_rates: vec![0.002], weight_decays: vec![0.03], hidden_sizes: vec![64] }
    }

    pub fn candidates(&self, model: ModelKind) -> Vec<HyperParams> {
        match model {
            ModelKind::Ols => vec![HyperParams::None],
            ModelKind::Ridge | ModelKind::Lasso => self.alphas.iter().map(|&a| HyperParams::Alpha(a)).collect(),
            ModelKind::Mlp => {
                let mut out = Vec::new();
                for &learning_rate in &self.learning_rates {
                    for &weight_decay in &self.weight_decays {
                        for &hidden in &self.hidden_sizes {
                            out.push(HyperParams::Mlp { learning_rate, weight_decay, hidden });
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HyperParams {
    None,
    Alpha(f64),
    Mlp { learning_rate: f64, weight_decay: f64, hidden: usize },
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::None => f.write_str("-"),
            HyperParams::Alpha(a) => write!(f, "alpha={a:e}"),
            HyperParams::Mlp { learning_rate, weight_decay, hidden } => {
                write!(f, "lr={learning_rate};wd={weight_decay};hidden={hidden}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: Measure,
    pub model: ModelKind,
    pub variant: Variant,
    pub folds: usize,
    pub grid: Grid,
    pub seed: u64,
    /// Refit the selected configuration on subtrain + validation before
    /// testing.
    pub refit: bool,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub weighting: ConstraintWeighting,
}

impl ExperimentConfig {
    pub fn new(target: Measure, model: ModelKind, variant: Variant, seed: u64) -> Self {
        ExperimentConfig {
            target,
            model,
            variant,
            folds: 10,
            grid: Grid::table3(),
            seed,
            refit: false,
            max_epochs: 200,
            batch_size: 32,
            weighting: ConstraintWeighting::Batch,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.variant == Variant::FlagsConstraints && self.model != ModelKind::Mlp {
            return Err(ExperimentError::Invalid(format!(
                "variant flags-constraints requires the mlp model, got {}",
                self.model
            )));
        }
        if self.folds < 2 {
            return Err(ExperimentError::Invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.grid.candidates(self.model).is_empty() {
            return Err(ExperimentError::Invalid(format!("empty hyperparameter grid for {}", self.model)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = Grid::table3();
        assert_eq!(g.candidates(ModelKind::Mlp).len(), 27);
        assert_eq!(g.candidates(ModelKind::Ridge).len(), 10);
        assert_eq!(g.candidates(ModelKind::Ols), vec![HyperParams::None]);
        assert_eq!(Grid::reduced().candidates(ModelKind::Mlp).len(), 1);
    }

    #[test]
    fn constraints_need_mlp() {
        let mut cfg = ExperimentConfig::new(Measure::At, ModelKind::Lasso, Variant::FlagsConstraints, 0);
        assert!(cfg.validate().is_err());
        cfg.model = ModelKind::Mlp;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn parse_names() {
        assert_eq!("flags-constraints".parse::<Variant>().unwrap(), Variant::FlagsConstraints);
        assert_eq!("plain".parse::<Variant>().unwrap(), Variant::Plain);
        assert_eq!("MLP".parse::<ModelKind>().unwrap(), ModelKind::Mlp);
        assert!("svm".parse::<ModelKind>().is_err());
        assert_eq!(Variant::Plain.flag_options(Measure::At), FlagOptions::NONE);
        assert!(!Variant::Flags.flag_options(Measure::Mi).upper_bound);
    }
}
