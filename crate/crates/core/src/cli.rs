//! Command-line frontend.
//!
//! Every subcommand accepts `--config FILE` pointing at a TOML file whose keys
//! mirror the long flag names with `-` replaced by `_`. Flags given on the
//! command line win over the file; the file wins over built-in defaults.
//!
//! Exit codes: 0 success, 1 structural or runtime failure (including bad
//! flags), 2 validation violations in the input data, 3 fold construction or
//! model fitting failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assemble::{
    build_event_stream, encode_features, AssembleError, HorizonConfig, LabelMode,
};
use crate::evaluate::{evaluate_cv, make_folds, prune_features, CvConfig, EvalError, PruneRule};
use crate::ingest::{load_bundle, read_csv_file, write_csv_file, BundlePaths, IngestError};
use crate::logreg::{fit, FitConfig, LogRegError, Solver};
use crate::report::{CvSummary, ReportBundle, SweepPoint};
use crate::schema::{Feature, MachineStateRow, ValidationReport};
use crate::synth::{generate, SynthConfig, SynthError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("input failed validation:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Fit(#[from] LogRegError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Eval(_) | CliError::Fit(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "pdmaint",
    version,
    about = "Predict machine failures a fixed horizon ahead from hourly event streams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic five-file dataset with a planted error -> failure signal
    Generate(GenerateArgs),
    /// Load, validate and join the datasets into a labeled machine-state CSV
    Assemble(AssembleArgs),
    /// Fit one model on every row and write it to a model file
    Train(TrainArgs),
    /// Cross-validate on machine-disjoint, time-ordered folds and write a report
    Evaluate(EvaluateArgs),
    /// Evaluate, prune features, re-evaluate on the reduced set and report both
    Prune(PruneArgs),
    /// Re-render text and SVG artifacts from a saved report directory
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the five CSV files
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Number of machines [default: 100]
    #[arg(long)]
    pub machines: Option<u32>,
    /// Days of hourly telemetry per machine [default: 365]
    #[arg(long)]
    pub days: Option<u32>,
    /// Random seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target fraction of positive labels at a 24 h horizon [default: 0.017]
    #[arg(long)]
    pub failure_rate: Option<f64>,
    /// Relative failure risk after an error is 1 + signal [default: 2000]
    #[arg(long)]
    pub signal: Option<f64>,
    /// Ramp pressure/vibration/voltage before failures
    #[arg(long)]
    pub telemetry_drift: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory holding telemetry.csv, errors.csv, maintenance.csv, failures.csv, machines.csv
    #[arg(long)]
    pub in_dir: Option<PathBuf>,
    /// Telemetry CSV (overrides --in-dir for this file)
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    /// Errors CSV
    #[arg(long)]
    pub errors: Option<PathBuf>,
    /// Maintenance CSV
    #[arg(long)]
    pub maintenance: Option<PathBuf>,
    /// Failures CSV
    #[arg(long)]
    pub failures: Option<PathBuf>,
    /// Machines CSV
    #[arg(long)]
    pub machines: Option<PathBuf>,
    /// Pre-assembled machine-state CSV (from `assemble`); replaces the five inputs
    #[arg(long, conflicts_with_all = ["in_dir", "telemetry", "errors", "maintenance", "failures", "machines"])]
    pub stream: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct HorizonArgs {
    /// Hours between the feature row and the labeled failure state [default: 24]
    #[arg(long)]
    pub horizon: Option<u32>,
    /// Label a row positive if any failure falls in (t, t + horizon]
    #[arg(long)]
    pub label_window: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Sample weight of failure rows; other rows weigh 1 [default: 100]
    #[arg(long)]
    pub weight: Option<f64>,
    /// Decision threshold on the failure probability [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// L2 penalty on coefficients, not the intercept [default: 1.0]
    #[arg(long)]
    pub l2: Option<f64>,
    /// Gradient max-norm convergence tolerance [default: 1e-8]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Solver iteration cap [default: 100]
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// newton or gradient_descent [default: newton]
    #[arg(long)]
    pub solver: Option<Solver>,
    /// Comma-separated feature subset [default: all 29]
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub horizon: HorizonArgs,
    /// Output machine-state CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub horizon: HorizonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model file to write
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub horizon: HorizonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of machine groups / folds [default: 3]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed for the machine shuffle [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also evaluate at each of these failure weights (comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub sweep_weights: Option<Vec<f64>>,
    /// Report directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub eval: EvaluateArgs,
    /// Named pruning preset: paper-reduced
    #[arg(long, conflicts_with = "relative_threshold")]
    pub preset: Option<String>,
    /// Drop features below this fraction of the largest |mean weight| [default: 0.1]
    #[arg(long)]
    pub relative_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory containing report.json
    #[arg(long)]
    pub report_dir: PathBuf,
    /// Where to render; defaults to --report-dir
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub in_dir: Option<PathBuf>,
    pub telemetry: Option<PathBuf>,
    pub errors: Option<PathBuf>,
    pub maintenance: Option<PathBuf>,
    pub failures: Option<PathBuf>,
    pub machines: Option<toml::Value>,
    pub stream: Option<PathBuf>,
    pub days: Option<u32>,
    pub seed: Option<u64>,
    pub failure_rate: Option<f64>,
    pub signal: Option<f64>,
    pub telemetry_drift: Option<bool>,
    pub horizon: Option<u32>,
    pub label_window: Option<bool>,
    pub weight: Option<f64>,
    pub threshold: Option<f64>,
    pub l2: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub solver: Option<Solver>,
    pub features: Option<Vec<String>>,
    pub folds: Option<usize>,
    pub sweep_weights: Option<Vec<f64>>,
    pub prune: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// `machines` is a count for `generate` and a path elsewhere.
    fn machines_path(&self) -> Result<Option<PathBuf>, CliError> {
        match &self.machines {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(CliError::Usage(
                "config key `machines` must be a path here".into(),
            )),
        }
    }

    fn machines_count(&self) -> Result<Option<u32>, CliError> {
        match &self.machines {
            None => Ok(None),
            Some(toml::Value::Integer(n)) => u32::try_from(*n)
                .map(Some)
                .map_err(|_| CliError::Usage(format!("machines = {n} out of range"))),
            Some(_) => Err(CliError::Usage(
                "config key `machines` must be an integer here".into(),
            )),
        }
    }
}

/// Where the rows come from, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSource {
    Bundle {
        telemetry: PathBuf,
        errors: PathBuf,
        maintenance: PathBuf,
        failures: PathBuf,
        machines: PathBuf,
    },
    Stream {
        stream: PathBuf,
    },
}

/// Fully resolved settings of a train/evaluate/prune run. Serialized into
/// every report directory as `config.toml`; that file can be passed back
/// through `--config` to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub input: InputSource,
    pub horizon: u32,
    pub label_window: bool,
    pub weight: f64,
    pub threshold: f64,
    pub l2: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub solver: Solver,
    pub features: Vec<String>,
    pub folds: usize,
    pub seed: u64,
    pub sweep_weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prune: Option<String>,
}

impl RunConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            l2_strength: self.l2,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            solver: self.solver,
        }
    }

    pub fn horizon_config(&self) -> HorizonConfig {
        HorizonConfig {
            horizon_hours: self.horizon,
            label_mode: if self.label_window {
                LabelMode::Window
            } else {
                LabelMode::Point
            },
        }
    }

    pub fn parsed_features(&self) -> Result<Vec<Feature>, CliError> {
        self.features
            .iter()
            .map(|s| {
                s.parse::<Feature>()
                    .map_err(|e| CliError::Usage(e.to_string()))
            })
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

fn resolve_input(input: &InputArgs, file: &FileConfig) -> Result<InputSource, CliError> {
    if let Some(stream) = input.stream.clone().or_else(|| {
        // A file-level stream only applies when no bundle flag was given.
        let any_bundle_flag = input.in_dir.is_some()
            || input.telemetry.is_some()
            || input.errors.is_some()
            || input.maintenance.is_some()
            || input.failures.is_some()
            || input.machines.is_some();
        (!any_bundle_flag).then(|| file.stream.clone()).flatten()
    }) {
        return Ok(InputSource::Stream { stream });
    }
    let dir = input.in_dir.clone().or_else(|| file.in_dir.clone());
    let defaults = dir.as_deref().map(BundlePaths::in_dir);
    let pick = |flag: &Option<PathBuf>, cfg: Option<PathBuf>, def: Option<PathBuf>, name: &str| {
        flag.clone()
            .or(cfg)
            .or(def)
            .ok_or_else(|| CliError::Usage(format!("missing input: pass --in-dir or --{name}")))
    };
    let d = |f: fn(&BundlePaths) -> PathBuf| defaults.as_ref().map(f);
    Ok(InputSource::Bundle {
        telemetry: pick(
            &input.telemetry,
            file.telemetry.clone(),
            d(|p| p.telemetry.clone()),
            "telemetry",
        )?,
        errors: pick(
            &input.errors,
            file.errors.clone(),
            d(|p| p.errors.clone()),
            "errors",
        )?,
        maintenance: pick(
            &input.maintenance,
            file.maintenance.clone(),
            d(|p| p.maintenance.clone()),
            "maintenance",
        )?,
        failures: pick(
            &input.failures,
            file.failures.clone(),
            d(|p| p.failures.clone()),
            "failures",
        )?,
        machines: pick(
            &input.machines,
            file.machines_path()?,
            d(|p| p.machines.clone()),
            "machines",
        )?,
    })
}

fn resolve_run(
    input: &InputArgs,
    horizon: &HorizonArgs,
    model: &ModelArgs,
    folds: Option<usize>,
    seed: Option<u64>,
    sweep: Option<&Vec<f64>>,
    file: &FileConfig,
) -> Result<RunConfig, CliError> {
    let defaults = FitConfig::default();
    let features = model
        .features
        .clone()
        .or_else(|| file.features.clone())
        .unwrap_or_else(|| Feature::all().iter().map(|f| f.name()).collect());
    let cfg = RunConfig {
        input: resolve_input(input, file)?,
        horizon: horizon.horizon.or(file.horizon).unwrap_or(24),
        label_window: horizon.label_window || file.label_window.unwrap_or(false),
        weight: model.weight.or(file.weight).unwrap_or(100.0),
        threshold: model.threshold.or(file.threshold).unwrap_or(0.5),
        l2: model.l2.or(file.l2).unwrap_or(defaults.l2_strength),
        tolerance: model
            .tolerance
            .or(file.tolerance)
            .unwrap_or(defaults.tolerance),
        max_iterations: model
            .max_iterations
            .or(file.max_iterations)
            .unwrap_or(defaults.max_iterations),
        solver: model.solver.or(file.solver).unwrap_or(defaults.solver),
        features,
        folds: folds.or(file.folds).unwrap_or(3),
        seed: seed.or(file.seed).unwrap_or(42),
        sweep_weights: sweep
            .cloned()
            .or_else(|| file.sweep_weights.clone())
            .unwrap_or_default(),
        prune: None,
    };
    cfg.parsed_features()?;
    cfg.fit_config().validate()?;
    if !(cfg.weight.is_finite() && cfg.weight > 0.0) {
        return Err(CliError::Usage(format!(
            "--weight must be positive, got {}",
            cfg.weight
        )));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(CliError::Usage(format!(
            "--threshold must lie in (0, 1), got {}",
            cfg.threshold
        )));
    }
    Ok(cfg)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Loads rows for a run and returns them with the dataset content digest.
pub fn load_rows(
    source: &InputSource,
    horizon: &HorizonConfig,
) -> Result<(Vec<MachineStateRow>, String), CliError> {
    match source {
        InputSource::Stream { stream } => {
            let bytes = fs::read(stream).map_err(|e| io_err(stream, e))?;
            let rows = read_csv_file::<MachineStateRow>(stream)?;
            Ok((rows, sha256_hex(&bytes)))
        }
        InputSource::Bundle {
            telemetry,
            errors,
            maintenance,
            failures,
            machines,
        } => {
            let paths = BundlePaths {
                telemetry: telemetry.clone(),
                errors: errors.clone(),
                maintenance: maintenance.clone(),
                failures: failures.clone(),
                machines: machines.clone(),
            };
            let (bundle, report) = load_bundle(&paths)?;
            if !report.is_empty() {
                eprint!("{report}");
            }
            if report.has_errors() {
                return Err(CliError::Validation(report));
            }
            let rows = build_event_stream(&bundle, horizon)?;
            Ok((rows, bundle.digest()))
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Assemble(a) => cmd_assemble(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Prune(a) => cmd_prune(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

#[derive(Serialize)]
struct GeneratorRecord {
    machines: u32,
    days: u32,
    seed: u64,
    failure_rate: f64,
    signal: f64,
    telemetry_drift: bool,
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let d = SynthConfig::default();
    let config = SynthConfig {
        n_machines: a
            .machines
            .or(file.machines_count()?)
            .unwrap_or(d.n_machines),
        n_days: a.days.or(file.days).unwrap_or(d.n_days),
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
        target_failure_rate: a
            .failure_rate
            .or(file.failure_rate)
            .unwrap_or(d.target_failure_rate),
        signal_strength: a.signal.or(file.signal).unwrap_or(d.signal_strength),
        telemetry_drift: a.telemetry_drift || file.telemetry_drift.unwrap_or(false),
    };
    let out = a
        .out_dir
        .clone()
        .or(file.out_dir)
        .ok_or_else(|| CliError::Usage("missing --out-dir".into()))?;
    let bundle = generate(&config)?;
    bundle.write_dir(&out).map_err(|e| io_err(&out, e))?;
    let record = GeneratorRecord {
        machines: config.n_machines,
        days: config.n_days,
        seed: config.seed,
        failure_rate: config.target_failure_rate,
        signal: config.signal_strength,
        telemetry_drift: config.telemetry_drift,
    };
    let path = out.join("generator.toml");
    fs::write(&path, toml::to_string(&record).expect("serializes"))
        .map_err(|e| io_err(&path, e))?;
    println!(
        "wrote {} machines x {} days ({} telemetry rows, {} failures) to {}",
        config.n_machines,
        config.n_days,
        bundle.telemetry.len(),
        bundle.failures.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_assemble(a: &AssembleArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let source = resolve_input(&a.input, &file)?;
    if matches!(source, InputSource::Stream { .. }) {
        return Err(CliError::Usage(
            "assemble reads the five datasets, not --stream".into(),
        ));
    }
    let horizon = HorizonConfig {
        horizon_hours: a.horizon.horizon.or(file.horizon).unwrap_or(24),
        label_mode: if a.horizon.label_window || file.label_window.unwrap_or(false) {
            LabelMode::Window
        } else {
            LabelMode::Point
        },
    };
    let out = a
        .out
        .clone()
        .or(file.out)
        .ok_or_else(|| CliError::Usage("missing --out".into()))?;
    let (rows, _) = load_rows(&source, &horizon)?;
    write_csv_file(&out, &rows).map_err(|e| io_err(&out, e))?;
    let positives = rows.iter().filter(|r| r.label).count();
    println!(
        "wrote {} rows ({} positive, horizon {} h, {:?} label) to {}",
        rows.len(),
        positives,
        horizon.horizon_hours,
        horizon.label_mode,
        out.display()
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let cfg = resolve_run(&a.input, &a.horizon, &a.model, None, None, None, &file)?;
    let out = a
        .model_out
        .clone()
        .or(file.model_out)
        .ok_or_else(|| CliError::Usage("missing --model-out".into()))?;
    let (rows, _) = load_rows(&cfg.input, &cfg.horizon_config())?;
    let all: Vec<usize> = (0..rows.len()).collect();
    let data = encode_features(&rows, &cfg.parsed_features()?, cfg.weight, &all)?;
    let model = fit(&data, &cfg.fit_config())?;
    model.save(&out).map_err(|e| io_err(&out, e))?;
    println!(
        "fit {} rows x {} features: {} iterations, converged {}, objective {:.6}",
        data.n_samples(),
        data.n_features(),
        model.fit_meta.iterations,
        model.fit_meta.converged,
        model.fit_meta.objective
    );
    println!("model written to {}", out.display());
    Ok(())
}

fn cv_config(cfg: &RunConfig, features: Vec<Feature>, weight: f64) -> CvConfig {
    CvConfig {
        fit: cfg.fit_config(),
        weight_positive: weight,
        threshold: cfg.threshold,
        features,
    }
}

fn run_evaluation(
    a: &EvaluateArgs,
    prune: Option<PruneRule>,
    file: &FileConfig,
) -> Result<(ReportBundle, PathBuf), CliError> {
    let mut cfg = resolve_run(
        &a.input,
        &a.horizon,
        &a.model,
        a.folds,
        a.seed,
        a.sweep_weights.as_ref(),
        file,
    )?;
    cfg.prune = prune.map(|r| match r {
        PruneRule::PaperReduced => "paper-reduced".to_string(),
        PruneRule::RelativeThreshold(f) => format!("{f:?}"),
    });
    let out = a
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .ok_or_else(|| CliError::Usage("missing --out-dir".into()))?;

    let horizon = cfg.horizon_config();
    let (rows, digest) = load_rows(&cfg.input, &horizon)?;
    let folds = make_folds(&rows, cfg.folds, cfg.seed)?;
    let features = cfg.parsed_features()?;
    let full = evaluate_cv(
        &rows,
        &folds,
        &cv_config(&cfg, features.clone(), cfg.weight),
    )?;

    let mut weight_sweep = Vec::new();
    for &w in &cfg.sweep_weights {
        if !(w.is_finite() && w > 0.0) {
            return Err(CliError::Usage(format!(
                "sweep weight must be positive, got {w}"
            )));
        }
        let r = evaluate_cv(&rows, &folds, &cv_config(&cfg, features.clone(), w))?;
        weight_sweep.push(SweepPoint {
            weight_positive: w,
            average: r.average,
        });
    }

    let reduced = match prune {
        Some(rule) => {
            let kept = prune_features(&full.weights, rule)?;
            let r = evaluate_cv(&rows, &folds, &cv_config(&cfg, kept, cfg.weight))?;
            Some(CvSummary::new(&r, &folds))
        }
        None => None,
    };

    let bundle = ReportBundle {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset_digest: digest,
        config: cfg.to_toml(),
        label_mode: match horizon.label_mode {
            LabelMode::Point => format!("point at t+{}h", horizon.horizon_hours),
            LabelMode::Window => format!("window (t, t+{}h]", horizon.horizon_hours),
        },
        full: CvSummary::new(&full, &folds),
        reduced,
        prune_rule: prune.map(|r| r.to_string()),
        weight_sweep,
    };
    Ok((bundle, out))
}

fn print_outcome(bundle: &ReportBundle, out: &Path) {
    let f = &bundle.full.average;
    println!(
        "full ({} features): recall {:.4}, false negative rate {:.4}, false positive rate {:.4}",
        bundle.full.features.len(),
        f.recall(),
        f.false_negative_rate(),
        f.false_positive_rate()
    );
    if let Some(r) = &bundle.reduced {
        println!(
            "reduced ({} features: {}): recall {:.4}, false negative rate {:.4}, false positive rate {:.4}",
            r.features.len(),
            r.features.join(","),
            r.average.recall(),
            r.average.false_negative_rate(),
            r.average.false_positive_rate()
        );
    }
    println!("report written to {}", out.display());
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let (bundle, out) = run_evaluation(a, None, &file)?;
    bundle.write(&out).map_err(|e| io_err(&out, e))?;
    print_outcome(&bundle, &out);
    Ok(())
}

pub fn cmd_prune(a: &PruneArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.eval.config.as_deref())?;
    let rule = match (&a.preset, a.relative_threshold) {
        (Some(p), _) if p == "paper-reduced" => PruneRule::PaperReduced,
        (Some(p), _) => return Err(CliError::Usage(format!("unknown preset {p:?}"))),
        (None, Some(f)) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(CliError::Usage(format!(
                    "--relative-threshold must lie in [0, 1], got {f}"
                )));
            }
            PruneRule::RelativeThreshold(f)
        }
        (None, None) => match &file.prune {
            Some(s) => s.parse().map_err(CliError::Usage)?,
            None => PruneRule::default(),
        },
    };
    let (bundle, out) = run_evaluation(&a.eval, Some(rule), &file)?;
    bundle.write(&out).map_err(|e| io_err(&out, e))?;
    print_outcome(&bundle, &out);
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let bundle = ReportBundle::load(&a.report_dir).map_err(|e| io_err(&a.report_dir, e))?;
    let out = a.out_dir.clone().unwrap_or_else(|| a.report_dir.clone());
    bundle.render(&out).map_err(|e| io_err(&out, e))?;
    print_outcome(&bundle, &out);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            CliError::Validation(ValidationReport::default()).exit_code(),
            2
        );
        assert_eq!(CliError::Eval(EvalError::FoldCount(1)).exit_code(), 3);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(run(["pdmaint", "--help"]), 0);
        assert_eq!(run(["pdmaint", "evaluate", "--bogus"]), 1);
    }

    #[test]
    fn flags_override_config_file() {
        let file: FileConfig = toml::from_str(
            "in_dir = \"data\"\nhorizon = 12\nweight = 10.0\nfolds = 4\nfeatures = [\"error_1\", \"age\"]\n",
        )
        .unwrap();
        let input = InputArgs {
            in_dir: None,
            telemetry: Some("t.csv".into()),
            errors: None,
            maintenance: None,
            failures: None,
            machines: None,
            stream: None,
        };
        let horizon = HorizonArgs {
            horizon: Some(48),
            label_window: false,
        };
        let model = ModelArgs {
            weight: None,
            threshold: None,
            l2: None,
            tolerance: None,
            max_iterations: None,
            solver: None,
            features: None,
        };
        let cfg = resolve_run(&input, &horizon, &model, None, Some(7), None, &file).unwrap();
        assert_eq!(cfg.horizon, 48);
        assert_eq!(cfg.weight, 10.0);
        assert_eq!(cfg.folds, 4);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.features, ["error_1", "age"]);
        match &cfg.input {
            InputSource::Bundle {
                telemetry, errors, ..
            } => {
                assert_eq!(telemetry, Path::new("t.csv"));
                assert_eq!(errors, Path::new("data/errors.csv"));
            }
            other => panic!("{other:?}"),
        }
        let back: FileConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back.horizon, Some(48));
    }
}
