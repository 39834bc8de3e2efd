//! Argument parsing and subcommand dispatch for the `incmeter` binary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use incmeter::datagen::{generate_dataset, load_dataset, load_dataset_verified, save_dataset, Dataset, GenConfig};
use incmeter::encoding::{build_vocabulary, encode_dataset, EncodedDataset};
use incmeter::experiments::{
    run_bench, run_cv, run_scalability, BenchOptions, ExperimentConfig, ExperimentError, Grid, ModelKind, Variant,
};
use incmeter::learners::{
    fit_lasso, fit_ols, fit_ridge, mae, save_checkpoint, train_mlp_on, Checkpoint, Model, Predictor, TrainSpec,
};
use incmeter::logic::KnowledgeBase;
use incmeter::measures::{
    dataset_stats, enumerate_mis, enumerate_mis_bruteforce, measure_kb, measure_kb_bruteforce, problematic,
    DatasetStats, Measure,
};
use incmeter::SEED_ENV;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "incmeter",
    version,
    about = "Exact and learned inconsistency measures for propositional knowledge bases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled random dataset (JSON Lines).
    Gen(GenArgs),
    /// Compute I_MI and I_at for one knowledge base.
    Measure(MeasureArgs),
    /// Label statistics of datasets as CSV.
    Stats(StatsArgs),
    /// Write the feature matrix of a dataset as CSV.
    Encode(EncodeArgs),
    /// Train one model and save a JSON checkpoint.
    Train(TrainArgs),
    /// Cross-validate a model with per-fold grid search.
    Cv(CvArgs),
    /// Time exact labeling against MLP training and prediction.
    Bench(BenchArgs),
    /// Cross-validated MAE for growing training-set sizes.
    Scale(ScaleArgs),
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Random seed [default: $INCMETER_SEED, else 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    atoms: usize,
    #[arg(long)]
    max_formulas: usize,
    #[arg(long)]
    n: usize,
    /// Maximum literal occurrences per formula.
    #[arg(long, default_value_t = 10)]
    max_literals: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    /// Formula of the knowledge base; repeat the flag or separate formulas with ';'.
    #[arg(long, required = true)]
    kb: Vec<String>,
    /// Cross-check against brute-force subset enumeration.
    #[arg(long)]
    bruteforce: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Dataset file; may be repeated.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Recompute labels and reject files whose stored labels differ.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "at")]
    target: Measure,
    #[arg(long, default_value = "plain")]
    variant: Variant,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mlp")]
    model: ModelKind,
    #[arg(long, default_value = "plain")]
    variant: Variant,
    #[arg(long, default_value = "at")]
    target: Measure,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Regularization strength for ridge and lasso.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.002)]
    lr: f64,
    #[arg(long, default_value_t = 0.03)]
    wd: f64,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    /// Fraction of rows held out for early stopping and reporting.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum GridChoice {
    /// Every value of every hyperparameter range.
    Full,
    /// Only the middle value of each range.
    Reduced,
}

impl GridChoice {
    fn grid(self) -> Grid {
        match self {
            GridChoice::Full => Grid::table3(),
            GridChoice::Reduced => Grid::reduced(),
        }
    }
}

#[derive(Debug, Args)]
struct CvOptions {
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, value_enum, default_value = "full")]
    grid: GridChoice,
    /// Refit the selected configuration on subtrain + validation.
    #[arg(long)]
    refit: bool,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[command(flatten)]
    options: CvOptions,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Atom pool sizes [default: 3,6,9].
    #[arg(long, value_delimiter = ',')]
    atoms: Vec<usize>,
    /// Formula caps [default: 5,10,15].
    #[arg(long, value_delimiter = ',')]
    max_formulas: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value = "at")]
    target: Measure,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScaleArgs {
    #[arg(long, default_value_t = 6)]
    atoms: usize,
    #[arg(long, default_value_t = 10)]
    max_formulas: usize,
    /// Dataset sizes, ascending [default: 1000,2000,...,9000].
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Variants to compare [default: plain,flags,flags-constraints].
    #[arg(long, value_delimiter = ',')]
    variant: Vec<Variant>,
    #[arg(long, default_value = "mlp")]
    model: ModelKind,
    #[arg(long, default_value = "mi")]
    target: Measure,
    #[command(flatten)]
    options: CvOptions,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

fn data_err(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Train(a) => cmd_train(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Scale(a) => cmd_scale(a),
    }
}

/// The explicit seed, else `$INCMETER_SEED`, else 0.
fn resolve_seed(arg: &SeedArg) -> Result<u64, CliError> {
    if let Some(s) = arg.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not a seed"))),
        Err(_) => Ok(0),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| data_err(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let mut config = GenConfig::new(a.atoms, a.max_formulas, a.n, resolve_seed(&a.seed)?);
    config.max_literal_occurrences = a.max_literals;
    config.validate().map_err(CliError::Usage)?;
    let d = generate_dataset(&config).map_err(data_err)?;
    save_dataset(&d, &a.out).map_err(data_err)?;
    eprintln!("wrote {} instances to {}", d.len(), a.out.display());
    Ok(())
}

fn cmd_measure(a: MeasureArgs) -> Result<(), CliError> {
    let texts: Vec<&str> = a.kb.iter().flat_map(|s| s.split(';')).map(str::trim).filter(|s| !s.is_empty()).collect();
    let kb = KnowledgeBase::parse(texts).map_err(data_err)?;
    let (mi, at) = measure_kb(&kb).map_err(data_err)?;
    println!("i_mi={mi}");
    println!("i_at={at}");
    let mis = enumerate_mis(&kb).map_err(data_err)?;
    for subset in mis.as_strings() {
        println!("mis={{{}}}", subset.join(", "));
    }
    let problematic = problematic(&kb).map_err(data_err)?;
    println!("problematic={{{}}}", problematic.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(", "));
    if a.bruteforce {
        let brute = measure_kb_bruteforce(&kb).map_err(data_err)?;
        let agree = brute == (mi, at) && enumerate_mis_bruteforce(&kb).map_err(data_err)? == mis;
        println!("bruteforce_agrees={agree}");
        if !agree {
            return Err(CliError::Data("brute-force enumeration disagrees".into()));
        }
    }
    Ok(())
}

fn load(path: &Path, verify: bool) -> Result<Dataset, CliError> {
    let loaded = if verify { load_dataset_verified(path) } else { load_dataset(path) };
    loaded.map_err(data_err)
}

fn cmd_stats(a: StatsArgs) -> Result<(), CliError> {
    let mut text = format!("file,{}\n", DatasetStats::CSV_HEADER);
    for path in &a.data {
        let d = load(path, a.verify)?;
        text.push_str(&format!("{},{}\n", path.display(), dataset_stats(&d).csv_row()));
    }
    emit(&text, a.out.as_deref())
}

fn encode(d: &Dataset, target: Measure, model: ModelKind, variant: Variant) -> Result<EncodedDataset, CliError> {
    if variant == Variant::FlagsConstraints && model != ModelKind::Mlp {
        return Err(CliError::Usage(format!("variant {variant} requires --model mlp")));
    }
    encode_dataset(d, target, variant.flag_options(target), Some(build_vocabulary([d]))).map_err(data_err)
}

fn cmd_encode(a: EncodeArgs) -> Result<(), CliError> {
    let d = load(&a.data, false)?;
    let e = encode(&d, a.target, ModelKind::Mlp, a.variant)?;
    e.write_csv(&a.out).map_err(data_err)?;
    eprintln!("wrote {} rows x {} columns to {}", e.len(), e.width(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let c = &a.common;
    let seed = resolve_seed(&c.seed)?;
    if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
        return Err(CliError::Usage(format!("--val-fraction must lie in (0, 1), got {}", a.val_fraction)));
    }
    let d = load(&c.data, false)?;
    let e = encode(&d, c.target, c.model, c.variant)?;
    if e.len() < 2 {
        return Err(CliError::Data("need at least 2 instances to train".into()));
    }
    let mut order: Vec<usize> = (0..e.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((e.len() as f64 * a.val_fraction).round() as usize).clamp(1, e.len() - 1);
    let (val, train) = order.split_at(n_val);
    let y = e.labels_of(train);
    let x_val = e.design_of(val.iter().copied());
    let y_val = e.labels_of(val);

    let (model, spec) = match c.model {
        ModelKind::Ols | ModelKind::Ridge | ModelKind::Lasso => {
            let x = e.design_of(train.iter().copied()).to_dense();
            let m = match c.model {
                ModelKind::Ols => fit_ols(&x, &y),
                ModelKind::Ridge => fit_ridge(&x, &y, a.alpha),
                _ => fit_lasso(&x, &y, a.alpha),
            }
            .map_err(data_err)?;
            (Model::Linear(m), None)
        }
        ModelKind::Mlp => {
            let mut spec = TrainSpec::new(a.hidden, a.lr, a.wd, seed);
            spec.max_epochs = a.max_epochs;
            if c.variant == Variant::FlagsConstraints {
                spec = spec.with_constraints(e.schema.heuristics());
            }
            let (m, log) =
                train_mlp_on(&e.design_of(train.iter().copied()), &y, &x_val, &y_val, &spec).map_err(data_err)?;
            eprintln!("best epoch {} of {}", log.best_epoch, log.epochs.len());
            (Model::Mlp(m), Some(spec))
        }
    };
    let val_mae = mae(&y_val, &model.predict(&x_val).map_err(data_err)?).map_err(data_err)?;
    let checkpoint = Checkpoint::new(&model, spec, e.fingerprint());
    save_checkpoint(&checkpoint, &a.out).map_err(data_err)?;
    println!("validation_mae={val_mae}");
    Ok(())
}

fn experiment_config(
    model: ModelKind,
    variant: Variant,
    target: Measure,
    seed: u64,
    options: &CvOptions,
) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::new(target, model, variant, seed);
    config.folds = options.folds;
    config.grid = options.grid.grid();
    config.refit = options.refit;
    config.max_epochs = options.max_epochs;
    config.validate()?;
    Ok(config)
}

fn cmd_cv(a: CvArgs) -> Result<(), CliError> {
    let c = &a.common;
    let config = experiment_config(c.model, c.variant, c.target, resolve_seed(&c.seed)?, &a.options)?;
    let d = load(&c.data, false)?;
    let e = encode(&d, c.target, c.model, c.variant)?;
    let report = run_cv(&e, &config)?;
    match &a.out {
        Some(path) => {
            emit(&report.to_csv(), Some(path))?;
            print!("{}", report.summary());
        }
        None => {
            print!("{}", report.to_csv());
            eprint!("{}", report.summary());
        }
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let seed = resolve_seed(&a.seed)?;
    let atoms = if a.atoms.is_empty() { vec![3, 6, 9] } else { a.atoms };
    let caps = if a.max_formulas.is_empty() { vec![5, 10, 15] } else { a.max_formulas };
    let mut configs = Vec::new();
    for &max_formulas in &caps {
        for &n_atoms in &atoms {
            configs.push(GenConfig::new(n_atoms, max_formulas, a.n, seed));
        }
    }
    let mut options = BenchOptions::new(configs, seed);
    options.target = a.target;
    options.max_epochs = a.max_epochs;
    let report = run_bench(&options)?;
    emit(&report.to_csv(), a.out.as_deref())
}

fn cmd_scale(a: ScaleArgs) -> Result<(), CliError> {
    let seed = resolve_seed(&a.seed)?;
    let sizes = if a.sizes.is_empty() { (1..=9).map(|k| k * 1000).collect() } else { a.sizes };
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("--sizes must be strictly ascending".into()));
    }
    let variants = if a.variant.is_empty() {
        if a.model == ModelKind::Mlp {
            vec![Variant::Plain, Variant::Flags, Variant::FlagsConstraints]
        } else {
            vec![Variant::Plain, Variant::Flags]
        }
    } else {
        a.variant
    };
    let template = experiment_config(a.model, variants[0], a.target, seed, &a.options)?;
    let base = GenConfig::new(a.atoms, a.max_formulas, 0, seed);
    let report = run_scalability(&base, &sizes, &variants, &template)?;
    emit(&report.to_csv(), a.out.as_deref())
}
