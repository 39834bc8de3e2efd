use serde::{Deserialize, Serialize};

use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    L1PlusConstraints,
}

/// How flag values scale the prediction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintWeighting {
    /// `L* = L_pred · (1 + Σ_ij mean_batch(x_ij))`.
    #[default]
    Batch,
    /// `L* = mean_k |y_k − ŷ_k| · (1 + Σ_ij x_ij[k])`.
    Instance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Plain mean absolute error of the batch.
    pub pred_loss: f64,
    /// `loss / pred_loss` under batch weighting.
    pub factor: f64,
    /// Derivative of `loss` with respect to each prediction.
    pub grad: Vec<f64>,
}

/// L1 prediction loss plus one term per flag column.
///
/// `flags[i][j][k]` is the value of column `j` of heuristic `i` for batch
/// row `k`. Each column contributes `L_pred · mean_k flags[i][j][k]`, so the
/// total is `L_pred` times `1 + Σ_ij mean`. The flag means do not depend on
/// the predictions, so the gradient is the L1 gradient times that factor.
/// With no flags this is the plain L1 loss.
pub fn custom_loss(
    predictions: &[f64],
    targets: &[f64],
    flags: &[Vec<Vec<f64>>],
    weighting: ConstraintWeighting,
) -> Result<LossOutput, LearnerError> {
    let b = predictions.len();
    if targets.len() != b {
        return Err(LearnerError::Dimension(format!("{b} predictions vs {} targets", targets.len())));
    }
    if b == 0 {
        return Err(LearnerError::Empty);
    }
    if let Some(col) = flags.iter().flatten().find(|c| c.len() != b) {
        return Err(LearnerError::Dimension(format!("flag column has {} rows, batch has {b}", col.len())));
    }
    let bf = b as f64;
    let pred_loss = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / bf;
    let sign = |p: f64, t: f64| {
        if p > t {
            1.0
        } else if p < t {
            -1.0
        } else {
            0.0
        }
    };
    match weighting {
        ConstraintWeighting::Batch => {
            let mut factor = 1.0;
            for column in flags.iter().flatten() {
                factor += column.iter().sum::<f64>() / bf;
            }
            let grad = predictions.iter().zip(targets).map(|(&p, &t)| factor * sign(p, t) / bf).collect();
            Ok(LossOutput { loss: pred_loss * factor, pred_loss, factor, grad })
        }
        ConstraintWeighting::Instance => {
            let weights: Vec<f64> = (0..b).map(|k| 1.0 + flags.iter().flatten().map(|c| c[k]).sum::<f64>()).collect();
            let loss = (0..b).map(|k| weights[k] * (predictions[k] - targets[k]).abs()).sum::<f64>() / bf;
            let grad = (0..b).map(|k| weights[k] * sign(predictions[k], targets[k]) / bf).collect();
            let factor = if pred_loss > 0.0 { loss / pred_loss } else { 1.0 };
            Ok(LossOutput { loss, pred_loss, factor, grad })
        }
    }
}
