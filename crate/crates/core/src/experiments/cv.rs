use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ExperimentConfig, ExperimentError, HyperParams, ModelKind, Variant};
use crate::datagen::splitmix64;
use crate::encoding::EncodedDataset;
use crate::learners::{fit_lasso, fit_ols, fit_ridge_path, mae, train_mlp_on, Predictor, TrainSpec};
use crate::measures::Measure;

/// Index sets of one fold. The three sets are disjoint and cover `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
    pub subtrain: Vec<usize>,
}

/// Shuffles `0..n` and cuts it into `k` test folds whose sizes differ by at
/// most one. For every fold a validation set of the same size as the test
/// fold is drawn at random from the remaining rows; the rest is the
/// subtraining set.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>, ExperimentError> {
    if k < 2 {
        return Err(ExperimentError::Invalid(format!("need at least 2 folds, got {k}")));
    }
    let largest = n.div_ceil(k);
    if n < k || n < 2 * largest + 1 {
        return Err(ExperimentError::Invalid(format!("{n} rows are too few for {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let len = base + usize::from(fold < extra);
        let test = order[start..start + len].to_vec();
        let mut rest: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
        rest.shuffle(&mut ChaCha8Rng::seed_from_u64(fold_seed(seed, fold)));
        let subtrain = rest.split_off(len);
        folds.push(FoldSplit { test, validation: rest, subtrain });
        start += len;
    }
    Ok(folds)
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    splitmix64(seed ^ splitmix64(fold as u64 + 1))
}

/// Callback receiving each fitted candidate with its training time in seconds.
pub type Visit<'a> = dyn FnMut(HyperParams, &dyn Predictor, f64) -> Result<(), ExperimentError> + 'a;

/// A model family with a hyperparameter grid.
pub trait Learner {
    fn candidates(&self) -> Vec<HyperParams>;

    /// Fits one model per entry of `candidates` on the `train` rows and
    /// hands each to `visit`. `val` is available for early stopping.
    fn fit_each(
        &self,
        candidates: &[HyperParams],
        data: &EncodedDataset,
        train: &[usize],
        val: &[usize],
        seed: u64,
        visit: &mut Visit<'_>,
    ) -> Result<(), ExperimentError>;
}

/// The built-in learners, configured by an [`ExperimentConfig`].
#[derive(Debug, Clone)]
pub struct StandardLearner {
    pub config: ExperimentConfig,
}

impl StandardLearner {
    pub fn new(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        Ok(StandardLearner { config })
    }

    fn train_spec(&self, hp: HyperParams, data: &EncodedDataset, seed: u64) -> Result<TrainSpec, ExperimentError> {
        let HyperParams::Mlp { learning_rate, weight_decay, hidden } = hp else {
            return Err(ExperimentError::Invalid(format!("{hp} is not an mlp configuration")));
        };
        let mut spec = TrainSpec::new(hidden, learning_rate, weight_decay, seed);
        spec.max_epochs = self.config.max_epochs;
        spec.batch_size = self.config.batch_size;
        spec.weighting = self.config.weighting;
        if self.config.variant == Variant::FlagsConstraints {
            spec = spec.with_constraints(data.schema.heuristics());
        }
        Ok(spec)
    }
}

impl Learner for StandardLearner {
    fn candidates(&self) -> Vec<HyperParams> {
        self.config.grid.candidates(self.config.model)
    }

    fn fit_each(
        &self,
        candidates: &[HyperParams],
        data: &EncodedDataset,
        train: &[usize],
        val: &[usize],
        seed: u64,
        visit: &mut Visit<'_>,
    ) -> Result<(), ExperimentError> {
        let y = data.labels_of(train);
        match self.config.model {
            ModelKind::Ols => {
                let start = Instant::now();
                let x = data.design_of(train.iter().copied()).to_dense();
                let m = fit_ols(&x, &y)?;
                let secs = start.elapsed().as_secs_f64();
                for &hp in candidates {
                    visit(hp, &m, secs)?;
                }
            }
            ModelKind::Ridge => {
                let alphas = alphas_of(candidates)?;
                let start = Instant::now();
                let x = data.design_of(train.iter().copied()).to_dense();
                let models = fit_ridge_path(&x, &y, &alphas)?;
                let secs = start.elapsed().as_secs_f64() / alphas.len().max(1) as f64;
                for (&hp, m) in candidates.iter().zip(&models) {
                    visit(hp, m, secs)?;
                }
            }
            ModelKind::Lasso => {
                let alphas = alphas_of(candidates)?;
                let x = data.design_of(train.iter().copied()).to_dense();
                for (&hp, &alpha) in candidates.iter().zip(&alphas) {
                    let start = Instant::now();
                    let m = fit_lasso(&x, &y, alpha)?;
                    visit(hp, &m, start.elapsed().as_secs_f64())?;
                }
            }
            ModelKind::Mlp => {
                let x = data.design_of(train.iter().copied());
                let x_val = data.design_of(val.iter().copied());
                let y_val = data.labels_of(val);
                for &hp in candidates {
                    let spec = self.train_spec(hp, data, seed)?;
                    let start = Instant::now();
                    let (m, _) = train_mlp_on(&x, &y, &x_val, &y_val, &spec)?;
                    visit(hp, &m, start.elapsed().as_secs_f64())?;
                }
            }
        }
        Ok(())
    }
}

fn alphas_of(candidates: &[HyperParams]) -> Result<Vec<f64>, ExperimentError> {
    candidates
        .iter()
        .map(|hp| match hp {
            HyperParams::Alpha(a) => Ok(*a),
            other => Err(ExperimentError::Invalid(format!("{other} is not a regularization strength"))),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_subtrain: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub hyperparams: HyperParams,
    pub val_mae: f64,
    pub test_mae: f64,
    pub train_secs: f64,
    pub predict_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub model: String,
    pub variant: String,
    pub target: Measure,
    pub folds: Vec<FoldReport>,
    pub mean_mae: f64,
    /// Population standard deviation of the per-fold test MAE.
    pub std_mae: f64,
}

impl CvReport {
    pub const CSV_HEADER: &'static str =
        "model,variant,target,fold,n_subtrain,n_validation,n_test,hyperparams,val_mae,test_mae,train_secs,predict_secs";

    /// One row per fold, then `mean` and `std` rows carrying the test MAE
    /// aggregates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let prefix = format!("{},{},{}", self.model, self.variant, self.target);
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{prefix},{},{},{},{},{},{},{},{},{}",
                f.fold,
                f.n_subtrain,
                f.n_validation,
                f.n_test,
                f.hyperparams,
                f.val_mae,
                f.test_mae,
                f.train_secs,
                f.predict_secs
            );
        }
        let _ = writeln!(out, "{prefix},mean,,,,,,{},,", self.mean_mae);
        let _ = writeln!(out, "{prefix},std,,,,,,{},,", self.std_mae);
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!("{} / {} / target {}\n", self.model, self.variant, self.target);
        let _ = writeln!(out, "{:>4}  {:>9}  {:>9}  {:>9}  hyperparameters", "fold", "val MAE", "test MAE", "train s");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:>4}  {:>9.4}  {:>9.4}  {:>9.3}  {}",
                f.fold, f.val_mae, f.test_mae, f.train_secs, f.hyperparams
            );
        }
        let _ = writeln!(out, "MAE {:.4} +/- {:.4}", self.mean_mae, self.std_mae);
        out
    }
}

/// Cross-validates one of the built-in learners on `data`.
pub fn run_cv(data: &EncodedDataset, config: &ExperimentConfig) -> Result<CvReport, ExperimentError> {
    let learner = StandardLearner::new(config.clone())?;
    let mut report = run_cv_with(data, &learner, config.folds, config.seed, config.refit)?;
    report.model = config.model.to_string();
    report.variant = config.variant.to_string();
    Ok(report)
}

/// Cross-validates any learner. In each fold every candidate is fitted on
/// the subtraining rows and the one with the lowest validation MAE is
/// scored on the test rows (after refitting on subtrain + validation when
/// `refit` is set).
pub fn run_cv_with(
    data: &EncodedDataset,
    learner: &dyn Learner,
    folds: usize,
    seed: u64,
    refit: bool,
) -> Result<CvReport, ExperimentError> {
    let candidates = learner.candidates();
    if candidates.is_empty() {
        return Err(ExperimentError::Invalid("empty hyperparameter grid".into()));
    }
    let splits = make_folds(data.len(), folds, seed)?;
    let x_all = data.design();
    let mut reports = Vec::with_capacity(splits.len());
    for (fold, split) in splits.iter().enumerate() {
        let x_val = x_all.select(&split.validation);
        let y_val = data.labels_of(&split.validation);
        let x_test = x_all.select(&split.test);
        let y_test = data.labels_of(&split.test);
        let mseed = fold_seed(seed ^ 0x6d6c_7073, fold);

        // (hyperparameters, val MAE, test MAE, train secs, predict secs)
        let mut best: Option<(HyperParams, f64, f64, f64, f64)> = None;
        learner.fit_each(&candidates, data, &split.subtrain, &split.validation, mseed, &mut |hp, model, secs| {
            let val_mae = mae(&y_val, &model.predict(&x_val)?)?;
            if best.as_ref().is_none_or(|b| val_mae < b.1) {
                let start = Instant::now();
                let preds = model.predict(&x_test)?;
                let predict_secs = start.elapsed().as_secs_f64();
                best = Some((hp, val_mae, mae(&y_test, &preds)?, secs, predict_secs));
            }
            Ok(())
        })?;
        let Some((hp, val_mae, mut test_mae, mut train_secs, mut predict_secs)) = best else {
            return Err(ExperimentError::Invalid("learner produced no model".into()));
        };
        if refit {
            let joined: Vec<usize> = split.subtrain.iter().chain(&split.validation).copied().collect();
            learner.fit_each(&[hp], data, &joined, &split.validation, mseed, &mut |_, model, secs| {
                let start = Instant::now();
                let preds = model.predict(&x_test)?;
                predict_secs = start.elapsed().as_secs_f64();
                test_mae = mae(&y_test, &preds)?;
                train_secs = secs;
                Ok(())
            })?;
        }
        reports.push(FoldReport {
            fold,
            n_subtrain: split.subtrain.len(),
            n_validation: split.validation.len(),
            n_test: split.test.len(),
            hyperparams: hp,
            val_mae,
            test_mae,
            train_secs,
            predict_secs,
        });
    }
    let k = reports.len() as f64;
    let mean_mae = reports.iter().map(|r| r.test_mae).sum::<f64>() / k;
    let std_mae = (reports.iter().map(|r| (r.test_mae - mean_mae).powi(2)).sum::<f64>() / k).sqrt();
    Ok(CvReport { model: "custom".into(), variant: "-".into(), target: data.target, folds: reports, mean_mae, std_mae })
}
