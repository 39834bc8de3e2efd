//! JSON model checkpoints.
//!
//! ```json
//! {
//!   "kind": "mlp",
//!   "shapes": [[d, h], [h], [h, h], [h], [h, 1], [1]],
//!   "params": [[...], [...], ...],
//!   "train_spec": {...},
//!   "fingerprint": "<sha256 of vocabulary and flag layout>"
//! }
//! ```
//!
//! Parameter arrays are flattened row-major. Linear models store
//! `[[d], [1]]` shapes: the coefficients, then the intercept.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Dense;
use super::{Design, LearnerError, LinearKind, LinearModel, MlpModel, Predictor, TrainSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Predictor for Model {
    fn input_width(&self) -> usize {
        match self {
            Model::Linear(m) => m.input_width(),
            Model::Mlp(m) => m.input_width(),
        }
    }

    fn predict(&self, x: &Design) -> Result<Vec<f64>, LearnerError> {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    pub shapes: Vec<Vec<usize>>,
    pub params: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(default)]
    pub train_spec: Option<TrainSpec>,
    pub fingerprint: String,
}

impl Checkpoint {
    pub fn new(model: &Model, train_spec: Option<TrainSpec>, fingerprint: impl Into<String>) -> Self {
        let fingerprint = fingerprint.into();
        match model {
            Model::Linear(m) => Checkpoint {
                kind: serde_json::to_value(m.kind).unwrap().as_str().unwrap().to_string(),
                shapes: vec![vec![m.coefficients.len()], vec![1]],
                params: vec![m.coefficients.clone(), vec![m.intercept]],
                alpha: m.alpha,
                dropout_rate: None,
                train_spec,
                fingerprint,
            },
            Model::Mlp(m) => {
                let layers = [&m.layer1, &m.layer2, &m.layer3];
                Checkpoint {
                    kind: "mlp".into(),
                    shapes: layers.iter().flat_map(|l| [vec![l.inputs, l.outputs], vec![l.outputs]]).collect(),
                    params: layers.iter().flat_map(|l| [l.weights.clone(), l.bias.clone()]).collect(),
                    alpha: None,
                    dropout_rate: Some(m.dropout_rate),
                    train_spec,
                    fingerprint,
                }
            }
        }
    }

    pub fn model(&self) -> Result<Model, LearnerError> {
        let bad = |msg: &str| LearnerError::Checkpoint(msg.to_string());
        if self.shapes.len() != self.params.len() {
            return Err(bad("shapes and params differ in length"));
        }
        for (s, p) in self.shapes.iter().zip(&self.params) {
            if s.iter().product::<usize>() != p.len() {
                return Err(bad("parameter array does not match its shape"));
            }
        }
        match self.kind.as_str() {
            "ols" | "ridge" | "lasso" => {
                if self.shapes.len() != 2 || self.shapes[1] != [1] {
                    return Err(bad("linear checkpoints hold coefficients and an intercept"));
                }
                let kind: LinearKind = serde_json::from_value(self.kind.clone().into()).unwrap();
                Ok(Model::Linear(LinearModel {
                    kind,
                    coefficients: self.params[0].clone(),
                    intercept: self.params[1][0],
                    alpha: self.alpha,
                    rank_deficient: false,
                    objective_trace: Vec::new(),
                }))
            }
            "mlp" => {
                if self.shapes.len() != 6 || self.shapes.iter().step_by(2).any(|s| s.len() != 2) {
                    return Err(bad("mlp checkpoints hold three weight/bias pairs"));
                }
                let layer = |i: usize| Dense {
                    inputs: self.shapes[2 * i][0],
                    outputs: self.shapes[2 * i][1],
                    weights: self.params[2 * i].clone(),
                    bias: self.params[2 * i + 1].clone(),
                };
                let m = MlpModel {
                    layer1: layer(0),
                    layer2: layer(1),
                    layer3: layer(2),
                    dropout_rate: self.dropout_rate.unwrap_or(super::DROPOUT_RATE),
                };
                m.validate()?;
                Ok(Model::Mlp(m))
            }
            other => Err(LearnerError::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<(), LearnerError> {
    let text = serde_json::to_string(c).map_err(|e| LearnerError::Checkpoint(e.to_string()))?;
    fs::write(path, text).map_err(|e| LearnerError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, LearnerError> {
    let text = fs::read_to_string(path).map_err(|e| LearnerError::Checkpoint(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LearnerError::Checkpoint(e.to_string()))
}
