//! Regression models over encoded knowledge bases: ordinary least squares,
//! ridge, lasso, and a three-layer perceptron trained with an optional
//! flag-weighted loss.

mod checkpoint;
mod linear;
mod loss;
mod mlp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Model};
pub use linear::{
    fit_lasso, fit_lasso_with, fit_ols, fit_ridge, fit_ridge_path, lasso_alpha_max, LassoOptions, LinearKind,
    LinearModel,
};
pub use loss::{custom_loss, ConstraintWeighting, LossKind, LossOutput};
pub use mlp::{
    mlp_forward, train_mlp, train_mlp_on, Dense, EpochLog, ForwardPass, Gradients, MlpModel, TrainLog, TrainSpec,
    DROPOUT_RATE, TABLE3_HIDDEN, TABLE3_LEARNING_RATES, TABLE3_WEIGHT_DECAYS,
};

/// Ridge and lasso regularization strengths, 1e-5 through 1e4.
pub const TABLE3_ALPHAS: [f64; 10] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4];

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("mean absolute error of empty input")]
    Empty,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// A design matrix stored row-wise as `(column, value)` pairs.
///
/// Encoded knowledge bases have a handful of ones among thousands of columns,
/// so rows only list their nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    width: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Design {
    /// Panics if any column index is out of range.
    pub fn from_sparse(width: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert!(rows.iter().flatten().all(|&(c, _)| c < width), "column index out of range");
        Design { width, rows }
    }

    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self, LearnerError> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(LearnerError::Dimension("rows have different lengths".into()));
        }
        let rows = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(c, &v)| (c, v)).collect())
            .collect();
        Ok(Design { width, rows })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect())
            .collect();
        Design { width: m.ncols(), rows }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.width);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn select(&self, indices: &[usize]) -> Design {
        Design { width: self.width, rows: indices.iter().map(|&i| self.rows[i].clone()).collect() }
    }
}

/// Named group of flag columns that feeds the constraint term of the loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heuristic {
    pub name: String,
    pub columns: Vec<usize>,
}

pub trait Predictor {
    fn input_width(&self) -> usize;

    /// One prediction per row; never stochastic.
    fn predict(&self, x: &Design) -> Result<Vec<f64>, LearnerError>;
}

/// Batch prediction with any model.
pub fn predict(model: &dyn Predictor, x: &Design) -> Result<Vec<f64>, LearnerError> {
    model.predict(x)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, LearnerError> {
    if y_true.len() != y_pred.len() {
        return Err(LearnerError::Dimension(format!("{} targets vs {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(LearnerError::Empty);
    }
    Ok(y_true.iter().zip(y_pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / y_true.len() as f64)
}

fn check_width(expected: usize, x: &Design) -> Result<(), LearnerError> {
    if x.width() != expected {
        return Err(LearnerError::Dimension(format!("model expects {expected} features, input has {}", x.width())));
    }
    Ok(())
}
