//! `rumnet` command line.
//!
//! Exit codes: 0 on success, 1 when flags fail validation (including
//! unknown flags), 2 when a computation or I/O step fails.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{kmeans, sweep, sweep_csv, KMeansOptions, SweepSpec};
use crate::dataio::{load_long_csv, save_long_csv, Dataset};
use crate::error::Error;
use crate::models::{ModelKind, RumnetConfig};
use crate::synthdata::{draw_ground_truth, generate, ground_truth_loss, random_guess_loss, SynthRecord};
use crate::theory::{compact_k, generalization_gap_terms, pmin_bound, BoundInputs};
use crate::training::{aggregate, cross_validate, evaluate, fit, split_703015, TrainConfig, DEFAULT_TOLERANCE};

#[derive(Debug, Parser)]
#[command(name = "rumnet", version, about = "Neural random-utility discrete choice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a ground-truth setting.
    Synth(SynthArgs),
    /// Fit one model on a 70/15/15 split.
    Train(TrainArgs),
    /// Loss and accuracy of a saved model on a dataset.
    Eval(EvalArgs),
    /// Repeated-split cross-validation over an optional architecture grid.
    Cv(CvArgs),
    /// Generalization-gap, compact-sample and minimum-probability bounds.
    Bound(BoundArgs),
    /// Choice probabilities while one attribute moves over a grid.
    Sweep(SweepArgs),
    /// k-means clustering of customer features.
    Cluster(ClusterArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    setting: u8,
    #[arg(long = "T", default_value_t = 10_000)]
    events: usize,
    #[arg(long, default_value_t = 5)]
    kappa: usize,
    #[arg(long = "P", default_value_t = 50)]
    universe: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives `events.csv` and `ground_truth.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelChoice {
    Mnl,
    Tastenet,
    Deepmnl,
    Rumnet,
    Vnn,
}

#[derive(Debug, Args, Clone)]
struct DataArgs {
    /// Long-format events CSV.
    #[arg(long)]
    data: PathBuf,
    /// Optional customers CSV.
    #[arg(long)]
    customers: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "rumnet")]
    model: ModelChoice,
    #[arg(long, default_value_t = 0)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    width: usize,
    #[arg(long = "K", default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    d_eps: usize,
    #[arg(long, default_value_t = 4)]
    d_nu: usize,
}

#[derive(Debug, Args, Clone)]
struct ConfigArgs {
    /// `key=value` file with TrainConfig fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write the fitted model.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the per-epoch loss report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of repeated splits.
    #[arg(long = "k", default_value_t = 10)]
    folds: usize,
    /// Comma-separated `depth x width` cells, e.g. `0x0,1x3,2x5`.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated sample counts for RUMnet cells, e.g. `2,5`.
    #[arg(long = "Ks")]
    ks: Option<String>,
    /// Summary CSV, one row per grid cell.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    kappa: usize,
    #[arg(long = "T")]
    samples: usize,
    /// Weight bound; mutually exclusive with `--model-file`.
    #[arg(long = "M", conflicts_with = "model_file")]
    weight_bound: Option<f64>,
    /// Measure M as the largest node 1-norm of a saved model.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    ell: Option<u32>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Index of the base event in the dataset.
    #[arg(long, default_value_t = 0)]
    event: usize,
    #[arg(long)]
    alternative: usize,
    #[arg(long)]
    feature: usize,
    #[arg(long)]
    lo: f64,
    #[arg(long)]
    hi: f64,
    #[arg(long, default_value_t = 21)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Cluster on z-scored features.
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Validation(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Validation(msg.into()))
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Cv(a) => cv(a),
        Command::Bound(a) => bound(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Cluster(a) => cluster(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(Error::io(path, e)))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Runtime(Error::io(path, e)))
}

fn load_data(d: &DataArgs) -> CliResult<Dataset> {
    Ok(load_long_csv(&d.data, d.customers.as_deref())?)
}

fn load_model(path: &Path) -> CliResult<ModelKind> {
    Ok(ModelKind::from_text(&read_file(path)?)?)
}

fn synth(a: SynthArgs) -> CliResult<()> {
    if !(1..=3).contains(&a.setting) {
        return invalid(format!("--setting must be 1, 2 or 3, got {}", a.setting));
    }
    if a.kappa == 0 || a.kappa > a.universe {
        return invalid(format!("--kappa must be in 1..={} (the universe size)", a.universe));
    }
    if a.events == 0 {
        return invalid("--T must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let gt = draw_ground_truth(a.setting, a.universe, &mut rng)?;
    let data = generate(&gt, a.events, a.kappa, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(Error::io(&a.out, e)))?;
    save_long_csv(&data, &a.out.join("events.csv"), None)?;
    let record = SynthRecord {
        ground_truth: gt.clone(),
        events: a.events,
        kappa: a.kappa,
        seed: a.seed,
    };
    write_file(&a.out.join("ground_truth.txt"), &record.to_text())?;
    println!("events={}", data.len());
    println!("ground_truth_loss={:?}", ground_truth_loss(&gt, &data, DEFAULT_TOLERANCE)?);
    println!("random_guess_loss={:?}", random_guess_loss(a.kappa)?);
    Ok(())
}

fn resolve_config(c: &ConfigArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &c.config {
        Some(p) => TrainConfig::from_kv_text(&read_file(p)?).map_err(|e| Failure::Validation(e.to_string()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = c.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = c.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = c.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = c.patience {
        cfg.patience = v;
    }
    if let Some(v) = c.tolerance {
        cfg.tolerance = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    // A patience above the epoch budget is clamped rather than rejected so
    // short runs can keep the default patience.
    cfg.patience = cfg.patience.min(cfg.epochs.max(1));
    cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(cfg)
}

fn validate_model_args(m: &ModelArgs) -> CliResult<()> {
    if m.depth > 0 && m.width == 0 {
        return invalid("--width must be positive when --depth > 0");
    }
    if m.model == ModelChoice::Rumnet && m.k == 0 {
        return invalid("--K must be at least 1");
    }
    Ok(())
}

fn build_model(m: &ModelArgs, data: &Dataset, seed: u64) -> crate::error::Result<ModelKind> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_x, d_z) = (data.d_x(), data.d_z());
    match m.model {
        ModelChoice::Mnl => Ok(ModelKind::mnl(d_x)),
        ModelChoice::Tastenet => ModelKind::tastenet(d_x, d_z, m.depth, m.width, &mut rng),
        ModelChoice::Deepmnl => ModelKind::deep_mnl(d_x, d_z, m.depth, m.width, &mut rng),
        ModelChoice::Rumnet => ModelKind::rumnet(
            RumnetConfig {
                d_x,
                d_z,
                d_eps: m.d_eps,
                d_nu: m.d_nu,
                k: m.k,
                depth: m.depth,
                width: m.width,
            },
            &mut rng,
        ),
        ModelChoice::Vnn => {
            let n = data.schema().kappa_max;
            if data.events().iter().any(|e| e.num_alternatives() != n) {
                return Err(Error::InvalidArgument(
                    "VNN needs every event to offer the same number of alternatives".into(),
                ));
            }
            ModelKind::vnn(n, d_x, d_z, m.depth, m.width, &mut rng)
        }
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    validate_model_args(&a.model)?;
    let cfg = resolve_config(&a.config)?;
    let data = load_data(&a.data)?;
    let (tr, va, te) = split_703015(&data, cfg.seed)?;
    let mut model = build_model(&a.model, &data, cfg.seed)?;
    let report = fit(&mut model, &tr, &va, Some(&te), &cfg)?;
    write_file(&a.out, &model.to_text())?;
    if let Some(p) = &a.report {
        write_file(p, &report.to_csv())?;
    }
    let f = &report.final_metrics;
    println!("model={}", model.name());
    println!("parameters={}", model.num_params());
    println!("epochs_run={}", report.val_history.len());
    println!("best_epoch={}", report.best_epoch);
    println!("train_loss={:?}", f.train_loss);
    println!("val_loss={:?}", f.val_loss);
    println!("test_loss={:?}", f.test_loss.unwrap_or(f64::NAN));
    println!("test_accuracy={:?}", f.test_acc.unwrap_or(f64::NAN));
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    if !(a.tolerance >= 0.0) {
        return invalid("--tolerance must be >= 0");
    }
    let model = load_model(&a.model_file)?;
    let data = load_data(&a.data)?;
    let (loss, acc) = evaluate(&model, &data, a.tolerance)?;
    println!("loss={loss:?}");
    println!("accuracy={acc:?}");
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Failure::Validation(format!("bad {what} entry `{t}`")))
        })
        .collect()
}

fn parse_grid(s: &str) -> CliResult<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|cell| {
            let (d, w) = cell
                .trim()
                .split_once('x')
                .ok_or_else(|| Failure::Validation(format!("grid cell `{cell}` is not DEPTHxWIDTH")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Failure::Validation(format!("bad grid cell `{cell}`")))
            };
            Ok((parse(d)?, parse(w)?))
        })
        .collect()
}

fn cv(a: CvArgs) -> CliResult<()> {
    validate_model_args(&a.model)?;
    if a.folds < 2 {
        return invalid("--k must be at least 2");
    }
    let cfg = resolve_config(&a.config)?;
    let cells = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => vec![(a.model.depth, a.model.width)],
    };
    if cells.iter().any(|&(d, w)| d > 0 && w == 0) {
        return invalid("grid cells with depth > 0 need a positive width");
    }
    let ks = match (&a.ks, a.model.model) {
        (Some(list), ModelChoice::Rumnet) => parse_list::<usize>(list, "--Ks")?,
        _ => vec![a.model.k],
    };
    if ks.contains(&0) {
        return invalid("--Ks entries must be positive");
    }
    let data = load_data(&a.data)?;

    let mut out = String::from(
        "model,depth,width,K,folds,mean_train_loss,mean_val_loss,mean_test_loss,std_test_loss,mean_test_acc,std_test_acc\n",
    );
    for &(depth, width) in &cells {
        for &k in &ks {
            let margs = ModelArgs {
                depth,
                width,
                k,
                ..a.model.clone()
            };
            let reports = cross_validate(&data, a.folds, &cfg, |seed| build_model(&margs, &data, seed))?;
            let metrics: Vec<_> = reports.iter().map(|r| r.final_metrics).collect();
            let agg = aggregate(&metrics)?;
            let k_col = if a.model.model == ModelChoice::Rumnet {
                k.to_string()
            } else {
                String::new()
            };
            writeln!(
                out,
                "{},{depth},{width},{k_col},{},{:?},{:?},{:?},{:?},{:?},{:?}",
                margs.model.to_possible_value().map_or("?".into(), |v| v.get_name().to_string()),
                a.folds,
                agg.mean.train_loss,
                agg.mean.val_loss,
                agg.mean.test_loss.unwrap_or(f64::NAN),
                agg.std.test_loss.unwrap_or(f64::NAN),
                agg.mean.test_acc.unwrap_or(f64::NAN),
                agg.std.test_acc.unwrap_or(f64::NAN),
            )
            .unwrap();
        }
    }
    write_file(&a.out, &out)?;
    print!("{out}");
    Ok(())
}

fn bound(a: BoundArgs) -> CliResult<()> {
    let (m, model_depth) = match (&a.weight_bound, &a.model_file) {
        (Some(m), None) => (*m, None),
        (None, Some(p)) => {
            let model = load_model(p)?;
            let depth = model.networks().first().map(|n| n.spec().depth as u32);
            (model.max_node_l1(), depth)
        }
        _ => return invalid("exactly one of --M or --model-file is required"),
    };
    let ell = match (a.ell, model_depth) {
        (Some(l), _) => l,
        (None, Some(l)) => l,
        (None, None) => return invalid("--ell is required unless --model-file is given"),
    };
    let inputs = BoundInputs {
        c1: a.c1,
        c2: a.c2,
        ..BoundInputs::new(a.kappa, a.samples, m, ell, a.delta)
    };
    inputs.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    if let Some(eps) = a.epsilon {
        if !(eps > 0.0) {
            return invalid("--epsilon must be positive");
        }
    }
    let terms = generalization_gap_terms(&inputs)?;
    println!("M={m:?}");
    println!("ell={ell}");
    println!("generalization_gap={:?}", terms.total());
    println!("complexity_term={:?}", terms.complexity);
    println!("confidence_term={:?}", terms.confidence);
    println!("pmin_bound={:?}", pmin_bound(a.kappa, m)?);
    if let Some(eps) = a.epsilon {
        println!("compact_K={}", compact_k(eps, &inputs)?);
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> CliResult<()> {
    if a.steps < 2 {
        return invalid("--steps must be at least 2");
    }
    let model = load_model(&a.model_file)?;
    let data = load_data(&a.data)?;
    let base_event = data
        .events()
        .get(a.event)
        .cloned()
        .ok_or_else(|| Failure::Validation(format!("--event {} out of range ({} events)", a.event, data.len())))?;
    let rows = sweep(
        &model,
        &SweepSpec {
            base_event,
            target_alternative: a.alternative,
            target_feature: a.feature,
            lo: a.lo,
            hi: a.hi,
            steps: a.steps,
        },
    )?;
    write_file(&a.out, &sweep_csv(&rows))?;
    println!("rows={}", rows.len());
    Ok(())
}

fn cluster(a: ClusterArgs) -> CliResult<()> {
    if a.k == 0 {
        return invalid("--k must be positive");
    }
    if a.data.customers.is_none() {
        return invalid("--customers is required to cluster customer features");
    }
    let data = load_data(&a.data)?;
    let points: Vec<Vec<f64>> = data.events().iter().map(|e| e.customer.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let result = kmeans(
        &points,
        a.k,
        &mut rng,
        KMeansOptions {
            max_iter: a.max_iter,
            standardize: a.standardize,
        },
    )?;
    write_file(&a.out, &result.centroids_csv())?;
    println!("sse={:?}", result.sse());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn grid_parsing() {
        assert!(matches!(parse_grid("0x0, 2x5").ok(), Some(v) if v == vec![(0, 0), (2, 5)]));
        assert!(parse_grid("2by5").is_err());
    }
}
