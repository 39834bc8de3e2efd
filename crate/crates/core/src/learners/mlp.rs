//! Three dense layers, `d → h → h → 1`, with tanh after the first two and
//! inverted dropout on their outputs while training.
//!
//! Inputs are sparse, so the first layer only touches the weight rows of
//! active features in both the forward and the backward pass. The optimizer
//! is Adam with decoupled weight decay.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{custom_loss, ConstraintWeighting, LossKind, LossOutput};
use super::{check_width, mae, Design, Heuristic, LearnerError, Predictor};
use crate::encoding::EncodedDataset;

pub const DROPOUT_RATE: f64 = 0.2;
pub const TABLE3_LEARNING_RATES: [f64; 3] = [0.001, 0.002, 0.003];
pub const TABLE3_WEIGHT_DECAYS: [f64; 3] = [0.01, 0.03, 0.05];
pub const TABLE3_HIDDEN: [usize; 3] = [32, 64, 128];

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Fully connected layer; `weights` is `inputs × outputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect();
        Dense { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    /// `out = bias + Σ_j x_j · W[j, :]` over the given nonzeros.
    fn affine_sparse(&self, x: &[(usize, f64)], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for &(j, v) in x {
            let row = &self.weights[j * self.outputs..(j + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
    }

    fn affine_dense(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (j, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &self.weights[j * self.outputs..(j + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer1: Dense,
    pub layer2: Dense,
    pub layer3: Dense,
    pub dropout_rate: f64,
}

/// Activations of one forward pass. `a*` are tanh outputs, `h*` the same
/// after dropout (equal to `a*` at inference).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub output: f64,
    pub a1: Vec<f64>,
    pub h1: Vec<f64>,
    pub a2: Vec<f64>,
    pub h2: Vec<f64>,
}

impl ForwardPass {
    fn new(hidden: usize) -> Self {
        ForwardPass {
            output: 0.0,
            a1: vec![0.0; hidden],
            h1: vec![0.0; hidden],
            a2: vec![0.0; hidden],
            h2: vec![0.0; hidden],
        }
    }
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    touched: Vec<usize>,
    is_touched: Vec<bool>,
}

impl Gradients {
    fn for_model(m: &MlpModel) -> Self {
        Gradients {
            w1: vec![0.0; m.layer1.weights.len()],
            b1: vec![0.0; m.layer1.bias.len()],
            w2: vec![0.0; m.layer2.weights.len()],
            b2: vec![0.0; m.layer2.bias.len()],
            w3: vec![0.0; m.layer3.weights.len()],
            b3: vec![0.0; m.layer3.bias.len()],
            touched: Vec::new(),
            is_touched: vec![false; m.layer1.inputs],
        }
    }

    fn clear(&mut self, hidden: usize) {
        for &j in &self.touched {
            self.w1[j * hidden..(j + 1) * hidden].fill(0.0);
            self.is_touched[j] = false;
        }
        self.touched.clear();
        for g in [&mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3] {
            g.fill(0.0);
        }
    }

    /// Same order as [`MlpModel::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
            .into_iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let layer1 = Dense::glorot(inputs, hidden, rng);
        let layer2 = Dense::glorot(hidden, hidden, rng);
        let layer3 = Dense::glorot(hidden, 1, rng);
        MlpModel { layer1, layer2, layer3, dropout_rate: DROPOUT_RATE }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        MlpModel {
            layer1: Dense::zeros(inputs, hidden),
            layer2: Dense::zeros(hidden, hidden),
            layer3: Dense::zeros(hidden, 1),
            dropout_rate: DROPOUT_RATE,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.layer1.outputs
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let h = self.hidden_size();
        let layers = [(&self.layer1, self.layer1.inputs, h), (&self.layer2, h, h), (&self.layer3, h, 1)];
        for (i, (l, inputs, outputs)) in layers.into_iter().enumerate() {
            if l.inputs != inputs
                || l.outputs != outputs
                || l.weights.len() != inputs * outputs
                || l.bias.len() != outputs
            {
                return Err(LearnerError::Dimension(format!("layer {} has inconsistent shape", i + 1)));
            }
        }
        Ok(())
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.param_slices().into_iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), LearnerError> {
        let total: usize = self.param_slices().iter().map(|s| s.len()).sum();
        if flat.len() != total {
            return Err(LearnerError::Dimension(format!("{} values for {total} parameters", flat.len())));
        }
        let mut rest = flat;
        for v in self.param_slices_mut() {
            let (head, tail) = rest.split_at(v.len());
            v.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn param_slices(&self) -> [&Vec<f64>; 6] {
        [
            &self.layer1.weights,
            &self.layer1.bias,
            &self.layer2.weights,
            &self.layer2.bias,
            &self.layer3.weights,
            &self.layer3.bias,
        ]
    }

    fn param_slices_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.layer1.weights,
            &mut self.layer1.bias,
            &mut self.layer2.weights,
            &mut self.layer2.bias,
            &mut self.layer3.weights,
            &mut self.layer3.bias,
        ]
    }

    /// Forward pass for a sparse row. `masks` holds per-unit dropout
    /// multipliers for the two hidden layers (0 or `1/(1-p)`).
    fn forward_row(&self, x: &[(usize, f64)], masks: Option<(&[f64], &[f64])>, pass: &mut ForwardPass) {
        self.layer1.affine_sparse(x, &mut pass.a1);
        self.finish_forward(masks, pass);
    }

    fn finish_forward(&self, masks: Option<(&[f64], &[f64])>, pass: &mut ForwardPass) {
        pass.a1.iter_mut().for_each(|z| *z = z.tanh());
        match masks {
            Some((m1, _)) => pass.h1.iter_mut().zip(&pass.a1).zip(m1).for_each(|((h, a), m)| *h = a * m),
            None => pass.h1.copy_from_slice(&pass.a1),
        }
        self.layer2.affine_dense(&pass.h1, &mut pass.a2);
        pass.a2.iter_mut().for_each(|z| *z = z.tanh());
        match masks {
            Some((_, m2)) => pass.h2.iter_mut().zip(&pass.a2).zip(m2).for_each(|((h, a), m)| *h = a * m),
            None => pass.h2.copy_from_slice(&pass.a2),
        }
        pass.output = self.layer3.bias[0] + pass.h2.iter().zip(&self.layer3.weights).map(|(h, w)| h * w).sum::<f64>();
    }

    fn predict_row(&self, x: &[(usize, f64)], pass: &mut ForwardPass) -> f64 {
        self.forward_row(x, None, pass);
        pass.output
    }

    /// Adds the gradient of `g_out · output` for one row to `grads`.
    fn backward_row(
        &self,
        x: &[(usize, f64)],
        masks: Option<(&[f64], &[f64])>,
        pass: &ForwardPass,
        g_out: f64,
        grads: &mut Gradients,
        scratch: &mut [Vec<f64>; 2],
    ) {
        let h = self.hidden_size();
        let [g_z2, g_z1] = scratch;
        grads.b3[0] += g_out;
        for k in 0..h {
            grads.w3[k] += g_out * pass.h2[k];
            let mut g = g_out * self.layer3.weights[k];
            if let Some((_, m2)) = masks {
                g *= m2[k];
            }
            g_z2[k] = g * (1.0 - pass.a2[k] * pass.a2[k]);
        }
        for (b, g) in grads.b2.iter_mut().zip(&g_z2[..h]) {
            *b += g;
        }
        for j in 0..h {
            let hj = pass.h1[j];
            let row = &self.layer2.weights[j * h..(j + 1) * h];
            let grow = &mut grads.w2[j * h..(j + 1) * h];
            let mut back = 0.0;
            for k in 0..h {
                grow[k] += hj * g_z2[k];
                back += row[k] * g_z2[k];
            }
            if let Some((m1, _)) = masks {
                back *= m1[j];
            }
            g_z1[j] = back * (1.0 - pass.a1[j] * pass.a1[j]);
        }
        for (b, g) in grads.b1.iter_mut().zip(&g_z1[..h]) {
            *b += g;
        }
        for &(j, v) in x {
            if !grads.is_touched[j] {
                grads.is_touched[j] = true;
                grads.touched.push(j);
            }
            let grow = &mut grads.w1[j * h..(j + 1) * h];
            for k in 0..h {
                grow[k] += v * g_z1[k];
            }
        }
    }

    /// Loss and gradient over `rows` of `x` as one batch, accumulated into
    /// `grads` (which must be cleared by the caller). Dropout is applied iff
    /// `rng` is given.
    #[allow(clippy::too_many_arguments)]
    fn batch_step(
        &self,
        x: &Design,
        y: &[f64],
        rows: &[usize],
        loss: &LossSpec,
        rng: Option<&mut ChaCha8Rng>,
        grads: &mut Gradients,
        work: &mut Workspace,
    ) -> Result<LossOutput, LearnerError> {
        let h = self.hidden_size();
        let b = rows.len();
        work.ensure(b, h);
        if let Some(rng) = rng {
            let keep = 1.0 - self.dropout_rate;
            let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
            for i in 0..b {
                for m in work.mask1[i].iter_mut().chain(work.mask2[i].iter_mut()) {
                    *m = if rng.gen::<f64>() < self.dropout_rate { 0.0 } else { scale };
                }
            }
            work.dropout = true;
        } else {
            work.dropout = false;
        }
        for (i, &r) in rows.iter().enumerate() {
            let masks = work.dropout.then(|| (&work.mask1[i][..], &work.mask2[i][..]));
            self.forward_row(x.row(r), masks, &mut work.passes[i]);
            work.preds[i] = work.passes[i].output;
            work.targets[i] = y[r];
        }
        let flags = loss.batch_flags(x, rows);
        let out = custom_loss(&work.preds[..b], &work.targets[..b], &flags, loss.weighting)?;
        for (i, &r) in rows.iter().enumerate() {
            if out.grad[i] == 0.0 {
                continue;
            }
            let masks = work.dropout.then(|| (&work.mask1[i][..], &work.mask2[i][..]));
            self.backward_row(x.row(r), masks, &work.passes[i], out.grad[i], grads, &mut work.scratch);
        }
        Ok(out)
    }

    /// Loss and parameter gradient over all of `x` as a single batch, with
    /// dropout off.
    pub fn loss_and_gradient(
        &self,
        x: &Design,
        y: &[f64],
        spec: &TrainSpec,
    ) -> Result<(LossOutput, Gradients), LearnerError> {
        check_width(self.layer1.inputs, x)?;
        if x.nrows() != y.len() {
            return Err(LearnerError::Dimension(format!("{} rows vs {} targets", x.nrows(), y.len())));
        }
        let loss = LossSpec::from_spec(spec);
        let mut grads = Gradients::for_model(self);
        let mut work = Workspace::default();
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let out = self.batch_step(x, y, &rows, &loss, None, &mut grads, &mut work)?;
        Ok((out, grads))
    }
}

impl Predictor for MlpModel {
    fn input_width(&self) -> usize {
        self.layer1.inputs
    }

    fn predict(&self, x: &Design) -> Result<Vec<f64>, LearnerError> {
        check_width(self.layer1.inputs, x)?;
        let mut pass = ForwardPass::new(self.hidden_size());
        Ok(x.rows().iter().map(|r| self.predict_row(r, &mut pass)).collect())
    }
}

/// Forward pass for a dense input vector.
///
/// With `training` set, dropout masks are drawn from `rng`; otherwise the
/// pass is deterministic and `rng` is untouched.
pub fn mlp_forward<R: Rng + ?Sized>(
    m: &MlpModel,
    x: &[f64],
    training: bool,
    rng: &mut R,
) -> Result<ForwardPass, LearnerError> {
    if x.len() != m.layer1.inputs {
        return Err(LearnerError::Dimension(format!(
            "model expects {} features, input has {}",
            m.layer1.inputs,
            x.len()
        )));
    }
    let h = m.hidden_size();
    let mut pass = ForwardPass::new(h);
    m.layer1.affine_dense(x, &mut pass.a1);
    if training {
        let keep = 1.0 - m.dropout_rate;
        let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
        let mut draw =
            || (0..h).map(|_| if rng.gen::<f64>() < m.dropout_rate { 0.0 } else { scale }).collect::<Vec<_>>();
        let m1 = draw();
        let m2 = draw();
        m.finish_forward(Some((&m1, &m2)), &mut pass);
    } else {
        m.finish_forward(None, &mut pass);
    }
    Ok(pass)
}

#[derive(Default)]
struct Workspace {
    passes: Vec<ForwardPass>,
    mask1: Vec<Vec<f64>>,
    mask2: Vec<Vec<f64>>,
    preds: Vec<f64>,
    targets: Vec<f64>,
    scratch: [Vec<f64>; 2],
    dropout: bool,
}

impl Workspace {
    fn ensure(&mut self, batch: usize, hidden: usize) {
        if self.passes.len() < batch || self.scratch[0].len() != hidden {
            self.passes = (0..batch).map(|_| ForwardPass::new(hidden)).collect();
            self.mask1 = vec![vec![1.0; hidden]; batch];
            self.mask2 = vec![vec![1.0; hidden]; batch];
            self.preds = vec![0.0; batch];
            self.targets = vec![0.0; batch];
            self.scratch = [vec![0.0; hidden], vec![0.0; hidden]];
        }
    }
}

/// Loss configuration resolved against column positions.
struct LossSpec {
    weighting: ConstraintWeighting,
    /// Column → (heuristic, feature) for constraint-augmented losses.
    columns: HashMap<usize, (usize, usize)>,
    shape: Vec<usize>,
}

impl LossSpec {
    fn from_spec(spec: &TrainSpec) -> Self {
        let mut columns = HashMap::new();
        let mut shape = Vec::new();
        if spec.loss == LossKind::L1PlusConstraints {
            for (i, h) in spec.heuristics.iter().enumerate() {
                for (j, &c) in h.columns.iter().enumerate() {
                    columns.insert(c, (i, j));
                }
                shape.push(h.columns.len());
            }
        }
        LossSpec { weighting: spec.weighting, columns, shape }
    }

    fn batch_flags(&self, x: &Design, rows: &[usize]) -> Vec<Vec<Vec<f64>>> {
        let mut flags: Vec<Vec<Vec<f64>>> = self.shape.iter().map(|&j| vec![vec![0.0; rows.len()]; j]).collect();
        if self.columns.is_empty() {
            return flags;
        }
        for (k, &r) in rows.iter().enumerate() {
            for (c, v) in x.row(r) {
                if let Some(&(i, j)) = self.columns.get(c) {
                    flags[i][j][k] = *v;
                }
            }
        }
        flags
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub loss: LossKind,
    #[serde(default)]
    pub weighting: ConstraintWeighting,
    pub heuristics: Vec<Heuristic>,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl TrainSpec {
    pub fn new(hidden_size: usize, learning_rate: f64, weight_decay: f64, seed: u64) -> Self {
        TrainSpec {
            loss: LossKind::L1,
            weighting: ConstraintWeighting::Batch,
            heuristics: Vec::new(),
            hidden_size,
            learning_rate,
            weight_decay,
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            dropout_rate: DROPOUT_RATE,
            seed,
        }
    }

    /// Switches to the constraint-augmented loss over `heuristics`.
    pub fn with_constraints(mut self, heuristics: Vec<Heuristic>) -> Self {
        self.loss = LossKind::L1PlusConstraints;
        self.heuristics = heuristics;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean of the minibatch losses, weighted by batch size.
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64], lr: f64, wd: f64, t: i32) {
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2_sqrt = (1.0 - BETA2.powi(t)).sqrt();
        let step = lr / bc1;
        let decay = 1.0 - lr * wd;
        for (((w, &g), m), v) in w.iter_mut().zip(g).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *w = *w * decay - step * *m / (v.sqrt() / bc2_sqrt + EPS);
        }
    }
}

/// Trains on encoded datasets; heuristic columns must be flag columns.
pub fn train_mlp(
    train: &EncodedDataset,
    val: &EncodedDataset,
    spec: &TrainSpec,
) -> Result<(MlpModel, TrainLog), LearnerError> {
    if train.schema != val.schema || train.vocabulary != val.vocabulary {
        return Err(LearnerError::Dimension("training and validation encodings differ".into()));
    }
    let vocab_len = train.schema.vocab_len;
    if let Some(c) = spec.heuristics.iter().flat_map(|h| &h.columns).find(|&&c| c < vocab_len || c >= train.width()) {
        return Err(LearnerError::Invalid(format!("heuristic column {c} is not a flag column")));
    }
    train_mlp_on(&train.design(), &train.labels, &val.design(), &val.labels, spec)
}

/// Minibatch AdamW with early stopping on validation MAE. Returns the
/// parameters from the epoch with the lowest validation MAE.
pub fn train_mlp_on(
    x: &Design,
    y: &[f64],
    x_val: &Design,
    y_val: &[f64],
    spec: &TrainSpec,
) -> Result<(MlpModel, TrainLog), LearnerError> {
    if x.nrows() != y.len() || x_val.nrows() != y_val.len() {
        return Err(LearnerError::Dimension("row and target counts differ".into()));
    }
    if x.width() != x_val.width() {
        return Err(LearnerError::Dimension(format!(
            "training width {} vs validation width {}",
            x.width(),
            x_val.width()
        )));
    }
    if x.nrows() == 0 || x_val.nrows() == 0 {
        return Err(LearnerError::Empty);
    }
    if spec.hidden_size == 0 || spec.batch_size == 0 || !(0.0..1.0).contains(&spec.dropout_rate) {
        return Err(LearnerError::Invalid(format!("bad training spec: {spec:?}")));
    }
    if let Some(c) = spec.heuristics.iter().flat_map(|h| &h.columns).find(|&&c| c >= x.width()) {
        return Err(LearnerError::Invalid(format!("heuristic column {c} out of range")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut model = MlpModel::new(x.width(), spec.hidden_size, &mut rng);
    model.dropout_rate = spec.dropout_rate;
    let loss = LossSpec::from_spec(spec);
    let h = spec.hidden_size;
    let mut grads = Gradients::for_model(&model);
    let mut work = Workspace::default();
    let mut adam: Vec<AdamState> = model.param_slices().iter().map(|p| AdamState::new(p.len())).collect();

    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut best = (model.clone(), f64::INFINITY, 0usize);
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut t = 0i32;
    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let out = model.batch_step(x, y, batch, &loss, Some(&mut rng), &mut grads, &mut work)?;
            if !out.loss.is_finite() {
                return Err(LearnerError::Divergence { epoch, loss: out.loss });
            }
            total += out.loss * batch.len() as f64;
            t += 1;
            let g = [&grads.w1, &grads.b1, &grads.w2, &grads.b2, &grads.w3, &grads.b3];
            for ((p, g), state) in model.param_slices_mut().into_iter().zip(g).zip(adam.iter_mut()) {
                state.step(p, g, spec.learning_rate, spec.weight_decay, t);
            }
            grads.clear(h);
        }
        let val_mae = mae(y_val, &model.predict(x_val)?)?;
        if !val_mae.is_finite() {
            return Err(LearnerError::Divergence { epoch, loss: val_mae });
        }
        epochs.push(EpochLog { epoch, train_loss: total / x.nrows() as f64, val_mae });
        if val_mae < best.1 {
            best = (model.clone(), val_mae, epoch);
        } else if epoch - best.2 >= spec.patience {
            stopped_early = true;
            break;
        }
    }
    let (model, best_val_mae, best_epoch) = best;
    Ok((model, TrainLog { epochs, best_epoch, best_val_mae, stopped_early }))
}
