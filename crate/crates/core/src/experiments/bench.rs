use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ExperimentError, Variant};
use crate::datagen::{generate_kbs, Dataset, GenConfig, LabeledInstance};
use crate::encoding::encode_dataset;
use crate::learners::{train_mlp_on, Predictor, TrainSpec};
use crate::measures::Measure;

/// Settings of the solver-versus-learner runtime comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub configs: Vec<GenConfig>,
    pub target: Measure,
    pub hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl BenchOptions {
    pub fn new(configs: Vec<GenConfig>, seed: u64) -> Self {
        BenchOptions {
            configs,
            target: Measure::At,
            hidden: 64,
            learning_rate: 0.002,
            weight_decay: 0.03,
            max_epochs: 200,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub atoms: usize,
    pub max_formulas: usize,
    pub instances: usize,
    /// Exact computation of both measures for every knowledge base.
    pub solver_secs: f64,
    pub train_secs: f64,
    /// Prediction for every knowledge base with the trained network.
    pub predict_secs: f64,
}

impl BenchRow {
    /// Training plus prediction.
    pub fn learner_secs(&self) -> f64 {
        self.train_secs + self.predict_secs
    }

    pub fn solver_us_per_kb(&self) -> f64 {
        1e6 * self.solver_secs / self.instances as f64
    }

    pub fn predict_us_per_kb(&self) -> f64 {
        1e6 * self.predict_secs / self.instances as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str =
        "atoms,max_formulas,instances,solver_secs,train_secs,predict_secs,learner_secs,solver_us_per_kb,predict_us_per_kb";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.atoms,
                r.max_formulas,
                r.instances,
                r.solver_secs,
                r.train_secs,
                r.predict_secs,
                r.learner_secs(),
                r.solver_us_per_kb(),
                r.predict_us_per_kb()
            );
        }
        out
    }
}

/// Times exact labeling against MLP inference for each configuration. The
/// network (with flag columns) is trained on a random 90% of the
/// instances, validated on the rest, and then predicts every instance.
pub fn run_bench(options: &BenchOptions) -> Result<BenchReport, ExperimentError> {
    let mut rows = Vec::with_capacity(options.configs.len());
    for config in &options.configs {
        config.validate().map_err(ExperimentError::Invalid)?;
        if config.n_instances < 2 {
            return Err(ExperimentError::Invalid("benchmark needs at least 2 instances".into()));
        }
        let kbs = generate_kbs(config);

        let start = Instant::now();
        let instances = kbs.into_iter().map(LabeledInstance::new).collect::<Result<Vec<_>, _>>()?;
        let solver_secs = start.elapsed().as_secs_f64();

        let dataset = Dataset { config: config.clone(), instances };
        let encoded = encode_dataset(&dataset, options.target, Variant::Flags.flag_options(options.target), None)?;
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed ^ config.seed));
        let n_val = (encoded.len() / 10).max(1);
        let (val, train) = order.split_at(n_val);

        let mut spec = TrainSpec::new(options.hidden, options.learning_rate, options.weight_decay, options.seed);
        spec.max_epochs = options.max_epochs;
        let start = Instant::now();
        let (model, _) = train_mlp_on(
            &encoded.design_of(train.iter().copied()),
            &encoded.labels_of(train),
            &encoded.design_of(val.iter().copied()),
            &encoded.labels_of(val),
            &spec,
        )?;
        let train_secs = start.elapsed().as_secs_f64();

        let x = encoded.design();
        let start = Instant::now();
        model.predict(&x)?;
        let predict_secs = start.elapsed().as_secs_f64();

        rows.push(BenchRow {
            atoms: config.atom_pool,
            max_formulas: config.max_formulas,
            instances: config.n_instances,
            solver_secs,
            train_secs,
            predict_secs,
        });
    }
    Ok(BenchReport { rows })
}
