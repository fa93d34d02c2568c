//! The `mapplan` command line and the experiment plumbing behind it:
//! run configuration, datasets, training, checkpoints, evaluation and plots.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod plot;
pub mod train;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::eval::{emit_report, leaderboard_score, CollisionMode, EvalError, HorizonSpec};
use crate::losses::LossError;
use crate::numerics::NumericsError;
use crate::planner::{Ablation, PlannerError};
use crate::scenario::{load_scenario, IntervalMode, ScenarioError, ScenarioParams};
use config::RunConfig;
use dataset::{generate_dataset, load_scenes, prepare_all};
use evaluate::{evaluate_samples, predict_all, predictions_csv, read_predictions, Predictor, PREDICTIONS_FILE};
use train::{loss_log_csv, TrainState};

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{path}: malformed line {line}")]
    Format { path: PathBuf, line: usize },
    #[error("non-finite loss at optimizer step {step} (scene {scene})")]
    NonFinite { step: u64, scene: String },
    #[error("{0} is empty")]
    EmptyData(String),
    #[error("no prediction for scene {0}")]
    MissingScene(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mapplan", version, about = "Map-assisted trajectory planning on synthetic BEV scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic scenes and a manifest.
    Generate(GenerateArgs),
    /// Train a planner and write a checkpoint plus the per-epoch loss log.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the ground truth) and write the metrics.
    Eval(EvalArgs),
    /// Print the leaderboard score of an (L2, collision %, off-road %) triple.
    Score(ScoreArgs),
    /// Draw a scene's predicted and ground-truth trajectories as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file of generator parameters; flags below override it.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Largest timestamp perturbation of past frames, seconds.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub min_obstacles: Option<usize>,
    #[arg(long)]
    pub max_obstacles: Option<usize>,
    #[arg(long)]
    pub truncated_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunOverrides {
    /// Run configuration (TOML); defaults to $MAPPLAN_CONFIG, then built-ins.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ablation: Option<Ablation>,
    #[arg(long, value_parser = parse_interval)]
    pub interval_mode: Option<IntervalMode>,
}

fn parse_interval(s: &str) -> Result<IntervalMode, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    /// Training scenes.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation scenes for the per-epoch ADE.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunOverrides,
    /// Required unless --gt-passthrough is given.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated 1-based future steps.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 7, 9])]
    pub horizons: Vec<usize>,
    /// Count footprint overlaps instead of waypoint hits as collisions.
    #[arg(long)]
    pub footprint_collisions: bool,
    /// Score the ground-truth trajectories themselves.
    #[arg(long)]
    pub gt_passthrough: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Average L2 error, meters.
    #[arg(long, allow_negative_numbers = true)]
    pub l2: f64,
    /// Collision rate, percent.
    #[arg(long, allow_negative_numbers = true)]
    pub col: f64,
    /// Off-road rate, percent.
    #[arg(long, allow_negative_numbers = true)]
    pub off: f64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Evaluation output directory.
    #[arg(long)]
    pub report: PathBuf,
    /// Scene file; its file stem is the scene id.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 640)]
    pub height: u32,
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn apply_overrides(cfg: &mut RunConfig, run: &RunOverrides) {
    if let Some(a) = run.ablation {
        cfg.ablation = a;
    }
    if let Some(m) = run.interval_mode {
        cfg.interval_mode = m;
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut params = match &args.params {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str::<ScenarioParams>(&text).map_err(|e| CliError::Config {
                path: p.clone(),
                message: e.to_string(),
            })?
        }
        None => ScenarioParams::default(),
    };
    if let Some(j) = args.jitter {
        params.timestamp_jitter = j;
    }
    if let Some(n) = args.min_obstacles {
        params.min_obstacles = n;
    }
    if let Some(n) = args.max_obstacles {
        params.max_obstacles = n;
    }
    if let Some(f) = args.truncated_fraction {
        params.truncated_fraction = f;
    }
    let m = generate_dataset(&args.out, args.seed, args.count, &params)?;
    println!("wrote {} scenes to {}", m.scenes.len(), args.out.display());
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(args.run.config.as_deref())?;
    apply_overrides(&mut cfg, &args.run);
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.data.is_some() {
        cfg.train_data = args.data.clone();
    }
    if args.val.is_some() {
        cfg.val_data = args.val.clone();
    }
    cfg.validate().map_err(CliError::Usage)?;
    let train_dir = cfg
        .train_data
        .clone()
        .ok_or_else(|| CliError::Usage("no training data (--data or train_data)".into()))?;
    let m = &cfg.model;
    let prep = |dir: &Path| -> Result<_, CliError> {
        prepare_all(load_scenes(dir)?, &cfg.grid, m.channels, m.token_stride, cfg.interval_mode)
    };
    let train_set = prep(&train_dir)?;
    let val_set = match &cfg.val_data {
        Some(d) => prep(d)?,
        None => Vec::new(),
    };
    create_dir(&args.out)?;
    write(&args.out.join(CONFIG_FILE), &cfg.to_toml())?;
    let mut state = TrainState::fresh(cfg)?;
    let logs = train::train(&mut state, &train_set, &val_set, |l| {
        let val = l.val_ade.map_or_else(|| "NA".into(), |v| format!("{v:.4}"));
        println!("epoch {:>3}  total {:.4}  ade {:.4}  val_ade {val}", l.epoch, l.total, l.ade);
    })?;
    write(&args.out.join(LOSS_LOG_FILE), &loss_log_csv(&logs))?;
    checkpoint::save(&state, &args.out.join(CHECKPOINT_FILE))?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let horizons = HorizonSpec::new(args.horizons.clone())?;
    let state = match (&args.checkpoint, args.gt_passthrough) {
        (Some(p), _) => Some(checkpoint::load(p)?),
        (None, true) => None,
        (None, false) => return Err(CliError::Usage("--checkpoint is required".into())),
    };
    let mut cfg = match &state {
        Some(s) => s.config.clone(),
        None => RunConfig::resolve(args.run.config.as_deref())?,
    };
    apply_overrides(&mut cfg, &args.run);
    let samples = prepare_all(
        load_scenes(&args.data)?,
        &cfg.grid,
        cfg.model.channels,
        cfg.model.token_stride,
        cfg.interval_mode,
    )?;
    let predictor = match &state {
        Some(s) if !args.gt_passthrough => Predictor::Model {
            model: &s.model,
            ablation: cfg.ablation,
        },
        _ => Predictor::GroundTruth,
    };
    let preds = predict_all(predictor, &samples, args.workers)?;
    let mode = if args.footprint_collisions {
        CollisionMode::Footprint
    } else {
        CollisionMode::Point
    };
    let report = evaluate_samples(&preds, &samples, &horizons, mode, &cfg.loss.ego)?;
    emit_report(&report, &args.out)?;
    write(&args.out.join(PREDICTIONS_FILE), &predictions_csv(&samples, &preds))?;
    print!("{}", crate::eval::report_summary(&report));
    Ok(())
}

pub fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    println!("{:.3}", leaderboard_score(args.l2, args.col, args.off));
    Ok(())
}

pub fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let scene = load_scenario(&args.scene)?;
    let id = args
        .scene
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let pred = read_predictions(&args.report.join(PREDICTIONS_FILE), &id)?;
    let canvas = plot::Canvas {
        width: args.width,
        height: args.height,
        ..Default::default()
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(&args.out, &plot::render_svg(&scene, &pred, &canvas))
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Score(a) => cmd_score(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> std::process::ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return std::process::ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
