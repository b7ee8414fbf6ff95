//! Command-line interface: `train`, `eval`, and `bench`.
//!
//! All tables and reports go to stdout and are deterministic for a fixed
//! command line; wall-clock timings go to stderr so repeated runs stay
//! byte-identical.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{fit_baseline, BaselineKind};
use crate::classify::group_error;
use crate::dataset::{load_csv, sniff_header, split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::group::{train_variant, EvolutionConfig, Variant};
use crate::model::{self, TrainPayload};

/// Closed-form local metric learning for kNN classification.
#[derive(Debug, Parser)]
#[command(name = "cflml", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a metric group and write it to a model file.
    Train(TrainArgs),
    /// Classify every row of a CSV with a saved model and print the error.
    Eval(EvalArgs),
    /// Compare methods over repeated splits of one dataset.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input CSV; the last column is the class label.
    #[arg(long)]
    pub data: PathBuf,
    /// Training mode: cflml1, cflml3, or em.
    #[arg(long, default_value = "cflml3")]
    pub variant: String,
    /// Neighborhood size.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Neighbor filter: gaussian or butterworth.
    #[arg(long, default_value = "gaussian")]
    pub filter: String,
    /// Scatter center: weighted or self.
    #[arg(long, default_value = "weighted")]
    pub center: String,
    /// Cap on group size for the em variant (including the seed metric).
    #[arg(long)]
    pub max_metrics: Option<usize>,
    /// Consecutive rejected offspring that stop the search.
    #[arg(long, default_value_t = 5)]
    pub backtrace: usize,
    /// Active-set threshold on group ambiguity.
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    /// Candidate-neighbor cache capacity (default: min(N-1, max(50, 5k))).
    #[arg(long)]
    pub omega: Option<usize>,
    /// Cap on learned metric rows.
    #[arg(long)]
    pub mcap: Option<usize>,
    /// Split seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Reference the training CSV by path and checksum instead of
    /// embedding the standardized rows.
    #[arg(long)]
    pub data_ref: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV to classify; the last column is the true label.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Input CSV; the last column is the class label.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated methods to run.
    #[arg(long, default_value = "euclidean,pca,lda,cflml1,cflml3,em")]
    pub methods: String,
    /// Number of repeated splits.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Neighborhood size for every method not overridden by --k-map.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Per-method k overrides, e.g. "euclidean=9,cflml3=5".
    #[arg(long)]
    pub k_map: Option<String>,
    /// PCA target dimension (default: keep every direction).
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Base seed; repeat r uses seed + r.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional CSV of per-repeat errors.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Neighbor filter for learned methods.
    #[arg(long, default_value = "gaussian")]
    pub filter: String,
    /// Scatter center for learned methods.
    #[arg(long, default_value = "weighted")]
    pub center: String,
    /// Active-set threshold for learned methods.
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    /// Rejection budget for learned methods.
    #[arg(long, default_value_t = 5)]
    pub backtrace: usize,
    /// Candidate-neighbor cache capacity.
    #[arg(long)]
    pub omega: Option<usize>,
    /// Cap on learned metric rows.
    #[arg(long)]
    pub mcap: Option<usize>,
    /// Cap on group size for the em method.
    #[arg(long)]
    pub max_metrics: Option<usize>,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Bench(args) => cmd_bench(&args),
    }
}

fn load_data(path: &Path) -> Result<Dataset> {
    let has_header = sniff_header(path)?;
    load_csv(path, has_header, None)
}

#[allow(clippy::too_many_arguments)]
fn evolution_from(
    k: usize,
    filter: &str,
    center: &str,
    theta: f64,
    backtrace: usize,
    omega: Option<usize>,
    mcap: Option<usize>,
    max_metrics: Option<usize>,
    seed: u64,
) -> Result<EvolutionConfig> {
    let mut cfg = EvolutionConfig::new(k);
    cfg.filter = filter.parse()?;
    cfg.center_mode = center.parse()?;
    cfg.theta = theta;
    cfg.backtrace_max = backtrace;
    cfg.omega_capacity = omega;
    cfg.m_cap = mcap;
    cfg.max_metrics = max_metrics;
    cfg.seed = seed;
    Ok(cfg)
}

fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let variant: Variant = args.variant.parse()?;
    let data = load_data(&args.data)?;
    let the_split = split(&data, &SplitSpec::with_seed(args.seed))?;
    let cfg = evolution_from(
        args.k,
        &args.filter,
        &args.center,
        args.theta,
        args.backtrace,
        args.omega,
        args.mcap,
        args.max_metrics,
        args.seed,
    )?;
    let (trained, report) = train_variant(variant, &data, &the_split, &cfg)?;

    let pure = the_split.pure_train();
    let payload = if args.data_ref {
        TrainPayload::Reference { csv_path: &args.data, train_indices: &pure }
    } else {
        TrainPayload::Embed
    };
    model::save(&args.out, &trained, payload)?;

    println!("variant: {variant}");
    println!("metrics: {} (attempts: {})", report.accepted_metrics, report.attempts);
    let steps: Vec<String> = report
        .validation_error_per_step
        .iter()
        .map(|e| format!("{:.2}%", e * 100.0))
        .collect();
    println!("validation error per step: {}", steps.join(" -> "));
    println!("final validation error: {:.2}%", report.final_val_error * 100.0);
    println!("model written to {}", args.out.display());
    eprintln!("training took {:.3}s", report.wall_time_secs);

    if report.fallback_l0 {
        eprintln!(
            "warning: the single solve produced no usable metric; \
             the model fell back to the identity transform"
        );
        return Ok(2);
    }
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let trained = model::load(&args.model)?;
    let data = load_data(&args.data)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let error = trained.evaluate(&data, &idx)?;
    println!("error: {:.2}%", error * 100.0);
    Ok(0)
}

/// One benchmark entry: a named method plus how to fit it.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub name: String,
    pub kind: MethodKind,
}

#[derive(Debug, Clone)]
pub enum MethodKind {
    Baseline(BaselineKind),
    Learned(Variant),
}

/// Parses the comma-separated method list.
pub fn parse_methods(list: &str, pca_dim: Option<usize>) -> Result<Vec<MethodSpec>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind = match name {
            "euclidean" => MethodKind::Baseline(BaselineKind::Euclidean),
            "pca" => MethodKind::Baseline(BaselineKind::Pca { target_dim: pca_dim }),
            "lda" => MethodKind::Baseline(BaselineKind::Lda { target_dim: None }),
            "cflml1" => MethodKind::Learned(Variant::Cflml1),
            "cflml3" => MethodKind::Learned(Variant::Cflml3),
            "em" => MethodKind::Learned(Variant::Em),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown method '{other}' (expected euclidean, pca, lda, cflml1, cflml3, or em)"
                )))
            }
        };
        out.push(MethodSpec { name: name.to_string(), kind });
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    Ok(out)
}

/// Parses "--k-map name=k,name=k" overrides.
pub fn parse_k_map(text: &str) -> Result<Vec<(String, usize)>> {
    let known = ["euclidean", "pca", "lda", "cflml1", "cflml3", "em"];
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((name, value)) = part.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "k-map entry '{part}' is not of the form method=k"
            )));
        };
        let name = name.trim();
        if !known.contains(&name) {
            return Err(Error::InvalidArgument(format!("k-map names unknown method '{name}'")));
        }
        let k: usize = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("k-map value '{value}' is not a count")))?;
        if k == 0 {
            return Err(Error::InvalidArgument("k-map values must be at least 1".into()));
        }
        out.push((name.to_string(), k));
    }
    Ok(out)
}

/// Benchmark knobs shared by every method.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub repeats: usize,
    pub base_seed: u64,
    pub default_k: usize,
    pub k_overrides: Vec<(String, usize)>,
    /// Template for learned methods; k, seed, and max_metrics are set per
    /// method and repeat.
    pub evolution: EvolutionConfig,
}

/// Per-method benchmark outcome; errors are percentages.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub name: String,
    pub k: usize,
    pub errors_pct: Vec<f64>,
    pub mean_pct: f64,
    pub std_pct: f64,
    pub wall_secs: f64,
}

/// A full benchmark run.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub dataset: String,
    pub instances: usize,
    pub dim: usize,
    pub classes: usize,
    pub repeats: usize,
    pub results: Vec<MethodResult>,
}

/// Runs every method over `repeats` seeded splits (repeat r uses
/// `base_seed + r`, shared across methods). Reference methods fit on the
/// raw features of the full training partition; learned methods
/// standardize internally and hold out validation rows.
pub fn run_bench(
    data: &Dataset,
    dataset_name: &str,
    methods: &[MethodSpec],
    opts: &BenchOptions,
) -> Result<BenchReport> {
    if opts.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut results: Vec<MethodResult> = methods
        .iter()
        .map(|m| {
            let k = opts
                .k_overrides
                .iter()
                .find(|(name, _)| name == &m.name)
                .map_or(opts.default_k, |&(_, k)| k);
            MethodResult {
                name: m.name.clone(),
                k,
                errors_pct: Vec::with_capacity(opts.repeats),
                mean_pct: 0.0,
                std_pct: 0.0,
                wall_secs: 0.0,
            }
        })
        .collect();

    for r in 0..opts.repeats {
        let seed = opts.base_seed + r as u64;
        let the_split = split(data, &SplitSpec::with_seed(seed))?;
        for (spec, result) in methods.iter().zip(results.iter_mut()) {
            let started = Instant::now();
            let error_pct = match &spec.kind {
                MethodKind::Baseline(kind) => {
                    let train = data.rows(&the_split.train);
                    let train_labels = data.labels_at(&the_split.train);
                    let test = data.rows(&the_split.test);
                    let test_labels = data.labels_at(&the_split.test);
                    let metric = fit_baseline(*kind, &train, &train_labels)?;
                    let assoc = vec![0usize; train.nrows()];
                    100.0
                        * group_error(
                            &[metric],
                            &assoc,
                            &train,
                            &train_labels,
                            &test,
                            &test_labels,
                            result.k,
                        )?
                }
                MethodKind::Learned(variant) => {
                    let mut cfg = opts.evolution.clone();
                    cfg.k = result.k;
                    cfg.seed = seed;
                    let (trained, _) = train_variant(*variant, data, &the_split, &cfg)?;
                    100.0 * trained.evaluate(data, &the_split.test)?
                }
            };
            result.errors_pct.push(error_pct);
            result.wall_secs += started.elapsed().as_secs_f64();
        }
    }

    for result in &mut results {
        let n = result.errors_pct.len() as f64;
        let mean = result.errors_pct.iter().sum::<f64>() / n;
        let var = result.errors_pct.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        result.mean_pct = mean;
        result.std_pct = var.sqrt();
    }

    Ok(BenchReport {
        dataset: dataset_name.to_string(),
        instances: data.len(),
        dim: data.dim(),
        classes: data.class_count(),
        repeats: opts.repeats,
        results,
    })
}

/// Renders the deterministic stdout table.
pub fn format_bench_table(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "dataset: {} (N={}, n={}, C={})\n",
        report.dataset, report.instances, report.dim, report.classes
    ));
    out.push_str(&format!("repeats: {}\n\n", report.repeats));
    out.push_str(&format!("{:<10} {:>3}  {}\n", "method", "k", "mean(std)%"));
    for r in &report.results {
        out.push_str(&format!(
            "{:<10} {:>3}  {:.2}({:.2})\n",
            r.name, r.k, r.mean_pct, r.std_pct
        ));
    }
    out
}

fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let methods = parse_methods(&args.methods, args.pca_dim)?;
    let k_overrides = match &args.k_map {
        Some(text) => parse_k_map(text)?,
        None => Vec::new(),
    };
    let data = load_data(&args.data)?;
    let evolution = evolution_from(
        args.k,
        &args.filter,
        &args.center,
        args.theta,
        args.backtrace,
        args.omega,
        args.mcap,
        args.max_metrics,
        args.seed,
    )?;
    let name = args
        .data
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.data.display().to_string());
    let opts = BenchOptions {
        repeats: args.repeats,
        base_seed: args.seed,
        default_k: args.k,
        k_overrides,
        evolution,
    };
    let report = run_bench(&data, &name, &methods, &opts)?;

    print!("{}", format_bench_table(&report));
    for r in &report.results {
        eprintln!("timing: {} {:.3}s", r.name, r.wall_secs);
    }

    if let Some(out) = &args.out {
        let mut csv_text = String::from("method,repeat,seed,error_pct\n");
        for r in &report.results {
            for (i, e) in r.errors_pct.iter().enumerate() {
                csv_text.push_str(&format!(
                    "{},{},{},{}\n",
                    r.name,
                    i,
                    opts.base_seed + i as u64,
                    e
                ));
            }
        }
        std::fs::write(out, csv_text).map_err(|e| Error::io(out, e))?;
    }
    Ok(0)
}
