//! The `pressim` command line: pose generation, deformation simulation,
//! network training, pressure synthesis and scoring.

pub mod config;
pub mod pipeline;
pub mod selftest;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pressim_core::datapipe::DataError;
use pressim_core::deformsim::DeformError;
use pressim_core::evalkit::{EvalError, MetricReport};
use pressim_core::neuralnet::{NetError, Real};
use pressim_core::posekit::PoseError;
use thiserror::Error;

use config::{Config, ConfigError};
use pipeline::{GenRequest, BASELINE, PRESSIM};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadInput { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: NetError },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// 1 usage, 2 data or format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Numerical(_)
            | CliError::Net(NetError::DivergenceDetected { .. })
            | CliError::Deform(
                DeformError::NonConvergence { .. } | DeformError::FrameNonConvergence { .. },
            ) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Parser)]
#[command(
    name = "pressim",
    version,
    about = "Ground pressure maps from 3D pose sequences"
)]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output file or directory of the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Arithmetic of training and synthesis.
    #[arg(long, global = true, value_enum, default_value = "f32")]
    precision: Precision,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic pose sequences.
    Gen(GenArgs),
    /// Simulate deformation profiles and reference pressure.
    Simulate(SimulateArgs),
    /// Train the pose, deformation, fusion and baseline networks.
    Train(TrainArgs),
    /// Synthesize pressure maps with trained networks.
    Synth(SynthArgs),
    /// Score synthesized pressure against ground truth.
    Eval(EvalArgs),
    /// Score both models on the synthesized test split and write the CSV.
    Report(ReportArgs),
    /// Gradient, metric and settle consistency checks.
    Selftest,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Single sequence of this template; without it every configured
    /// subject performs every configured template.
    #[arg(long)]
    template: Option<String>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    fps: Option<f64>,
    /// Joint noise amplitude in meters.
    #[arg(long)]
    noise: Option<f64>,
    /// `id:mass_kg:height_cm:gender`.
    #[arg(long)]
    subject: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Pose file or directory of `*.pose.psim` files [default: paths.data].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Spring stiffness per cell, N/m.
    #[arg(long)]
    k: Option<f64>,
    /// Penetration mapped to 255, mm.
    #[arg(long = "d-max")]
    d_max: Option<f64>,
    /// Sensor frame rate.
    #[arg(long = "pressure-fps")]
    pressure_fps: Option<f64>,
    /// Subject of a pose file without a `.subject` sidecar.
    #[arg(long)]
    subject: Option<String>,
    /// Also write every frame as PGM images into this directory.
    #[arg(long, value_name = "DIR")]
    pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of simulated sequences [default: paths.data].
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "baseline-epochs")]
    baseline_epochs: Option<usize>,
    /// `mse` or `fused_abs`.
    #[arg(long = "loss-mode")]
    loss_mode: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory holding the checkpoints [default: paths.models].
    #[arg(long)]
    models: Option<PathBuf>,
    /// Every window instead of the test split.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Synthesized pressure file, or a directory of them.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth pressure file, or the data directory.
    #[arg(long)]
    truth: PathBuf,
    /// Model name for a single file, or the models to compare in a directory.
    #[arg(long, value_delimiter = ',')]
    model: Vec<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory of synthesized files [default: paths.synth].
    #[arg(long)]
    synth: Option<PathBuf>,
}

fn override_pairs(cli: &Cli) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.seed {
        out.push(("seed".into(), seed.to_string()));
    }
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    let s = |v: &Option<f64>| v.map(|x| x.to_string());
    match &cli.command {
        Command::Gen(a) => {
            push("motion.template", a.template.clone());
            push("motion.duration", s(&a.duration));
            push("motion.fps", s(&a.fps));
            push("motion.noise", s(&a.noise));
            if let Some(spec) = &a.subject {
                let e: config::SubjectEntry = spec
                    .parse()
                    .map_err(|m| CliError::Usage(format!("--subject: {m}")))?;
                push("subject.id", Some(e.id));
                push("subject.mass_kg", Some(e.mass_kg.to_string()));
                push("subject.height_cm", Some(e.height_cm.to_string()));
                push("subject.gender", Some(e.gender));
            }
        }
        Command::Simulate(a) => {
            push("plane.k", s(&a.k));
            push("plane.d_max", s(&a.d_max));
            push("simulate.pressure_fps", s(&a.pressure_fps));
        }
        Command::Train(a) => {
            let n = |v: Option<usize>| v.map(|x| x.to_string());
            push("train.lr", s(&a.lr));
            push("train.batch", n(a.batch));
            push("train.epochs", n(a.epochs));
            push("train.baseline_epochs", n(a.baseline_epochs));
            push("train.loss_mode", a.loss_mode.clone());
        }
        _ => {}
    }
    Ok(out)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PRESSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "PRESSIM_THREADS must be a non-negative integer, got `{v}`"
        ))
    })?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Ctx<'a> {
    cfg: Config,
    out: Option<PathBuf>,
    stdout: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn say(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.stdout, "{msg}");
    }
}

fn cmd_gen(ctx: &mut Ctx<'_>, a: &GenArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    if a.template.is_none() && !cfg.dataset_subjects.is_empty() {
        let dir = ctx.out.clone().unwrap_or_else(|| cfg.data_dir.clone());
        let files = pipeline::generate_dataset(cfg, &dir)?;
        ctx.say(format!(
            "wrote {} pose sequences to {}",
            files.len(),
            dir.display()
        ));
        return Ok(());
    }
    let req = GenRequest {
        template: cfg.motion_template,
        duration: cfg.motion_duration,
        fps: cfg.motion_fps,
        noise: cfg.motion_noise,
        seed: cfg.seed,
        subject: cfg.subject.clone(),
    };
    let out = ctx.out.clone().unwrap_or_else(|| {
        cfg.data_dir.join(format!(
            "{}_{}{}",
            cfg.subject.id,
            cfg.motion_template,
            pipeline::POSE_SUFFIX
        ))
    });
    let n = pipeline::generate_file(&req, &out)?;
    ctx.say(format!("wrote {n} frames to {}", out.display()));
    Ok(())
}

fn cmd_simulate(ctx: &mut Ctx<'_>, a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let input = a.input.clone().unwrap_or_else(|| cfg.data_dir.clone());
    let outputs = if input.is_dir() {
        let out = ctx.out.clone().unwrap_or_else(|| input.clone());
        pipeline::simulate_dir(cfg, &input, &out, a.pgm.as_deref())?
    } else {
        let subject = match &a.subject {
            Some(spec) => spec
                .parse()
                .map_err(|m| CliError::Usage(format!("--subject: {m}")))?,
            None => pipeline::read_subject(&input)?.unwrap_or_else(|| cfg.subject.clone()),
        };
        let out = ctx.out.clone().unwrap_or_else(|| match input.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        });
        let plane = pipeline::plane_of(cfg)?;
        vec![pipeline::simulate_file(
            &input,
            &out,
            &subject,
            &plane,
            cfg.pressure_fps,
            a.pgm.as_deref(),
        )?]
    };
    for o in &outputs {
        ctx.say(format!(
            "{}: {} frames ({} without contact)",
            o.pressure.display(),
            o.frames,
            o.empty
        ));
    }
    Ok(())
}

fn cmd_train<T: Real>(ctx: &mut Ctx<'_>, a: &TrainArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg.clone();
    let data = a.data.clone().unwrap_or_else(|| cfg.data_dir.clone());
    let out = ctx.out.clone().unwrap_or_else(|| cfg.models_dir.clone());
    let corpus = pipeline::load_corpus(&data, cfg.align_tolerance, true)?;
    let splits = pipeline::split_corpus(&cfg, &corpus)?;
    let count = |f: fn(&pipeline::SequenceSplit) -> usize| splits.iter().map(f).sum::<usize>();
    ctx.say(format!(
        "{} sequences, {} windows: {} train, {} val, {} test",
        corpus.sequences.len(),
        corpus.data.len(),
        count(|s| s.train.len()),
        count(|s| s.val.len()),
        count(|s| s.test.len())
    ));
    ctx.say(format!(
        "lr {}, batch {}, {} epochs per network, {} baseline epochs",
        cfg.learning_rate,
        cfg.batch_size,
        cfg.epochs,
        cfg.baseline_budget()
    ));
    let stdout = &mut *ctx.stdout;
    let mut progress = |kind: pressim_core::neuralnet::NetworkKind,
                        r: &pressim_core::neuralnet::EpochRecord| {
        let val = r
            .val_mse
            .map(|v| format!(" val_mse {v:.3e}"))
            .unwrap_or_default();
        let _ = writeln!(
            stdout,
            "{kind} epoch {} train_mse {:.3e}{val}",
            r.epoch, r.train_mse
        );
    };
    let outcome = pipeline::train_all::<T>(&cfg, &corpus, &splits, &mut progress)?;
    pipeline::save_outcome(&out, &outcome, &splits)?;
    ctx.say(format!("checkpoints written to {}", out.display()));
    Ok(())
}

fn cmd_synth<T: Real>(ctx: &mut Ctx<'_>, a: &SynthArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let data = a.data.clone().unwrap_or_else(|| cfg.data_dir.clone());
    let models_dir = a.models.clone().unwrap_or_else(|| cfg.models_dir.clone());
    let out = ctx.out.clone().unwrap_or_else(|| cfg.synth_dir.clone());
    let corpus = pipeline::load_corpus(&data, cfg.align_tolerance, a.all)?;
    let models = pipeline::load_models::<T>(&models_dir)?;
    let splits = if a.all {
        Vec::new()
    } else {
        pipeline::read_splits(&models_dir.join(pipeline::SPLIT_FILE))?
    };
    let frames = pipeline::synthesize_dir(cfg, &corpus, &models, &splits, a.all, &out)?;
    ctx.say(format!(
        "synthesized {frames} frames per model into {}",
        out.display()
    ));
    Ok(())
}

fn emit_report(
    ctx: &mut Ctx<'_>,
    report: &MetricReport,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    ctx.say(report);
    if let Some(path) = csv {
        write_file(path, &report.to_csv())?;
        ctx.say(format!("wrote {}", path.display()));
    }
    Ok(())
}

fn cmd_eval(ctx: &mut Ctx<'_>, a: &EvalArgs) -> Result<(), CliError> {
    let report = if a.pred.is_dir() {
        let models: Vec<&str> = if a.model.is_empty() {
            vec![BASELINE, PRESSIM]
        } else {
            a.model.iter().map(String::as_str).collect()
        };
        pipeline::compare_dir(&a.truth, &a.pred, &models)?
    } else {
        let name = match a.model.as_slice() {
            [] => PRESSIM,
            [one] => one.as_str(),
            _ => {
                return Err(CliError::Usage(
                    "--model takes one name when --pred is a file".into(),
                ))
            }
        };
        pipeline::compare_files(&a.pred, &a.truth, name)?
    };
    let out = ctx.out.clone();
    emit_report(ctx, &report, out.as_deref())
}

fn cmd_report(ctx: &mut Ctx<'_>, a: &ReportArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let data = a.data.clone().unwrap_or_else(|| cfg.data_dir.clone());
    let synth = a.synth.clone().unwrap_or_else(|| cfg.synth_dir.clone());
    let out = ctx.out.clone().unwrap_or_else(|| cfg.report_path.clone());
    let report = pipeline::compare_dir(&data, &synth, &[BASELINE, PRESSIM])?;
    emit_report(ctx, &report, Some(&out))
}

fn cmd_selftest(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let checks = selftest::run_all(ctx.cfg.seed);
    for c in &checks {
        ctx.say(c);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} selftest check(s) failed"
        )));
    }
    ctx.say("selftest passed");
    Ok(())
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    configure_threads()?;
    let overrides = override_pairs(cli)?;
    let cfg = Config::load(cli.config.as_deref(), &overrides)?;
    let mut ctx = Ctx {
        cfg,
        out: cli.out.clone(),
        stdout,
    };
    match (&cli.command, cli.precision) {
        (Command::Gen(a), _) => cmd_gen(&mut ctx, a),
        (Command::Simulate(a), _) => cmd_simulate(&mut ctx, a),
        (Command::Train(a), Precision::F32) => cmd_train::<f32>(&mut ctx, a),
        (Command::Train(a), Precision::F64) => cmd_train::<f64>(&mut ctx, a),
        (Command::Synth(a), Precision::F32) => cmd_synth::<f32>(&mut ctx, a),
        (Command::Synth(a), Precision::F64) => cmd_synth::<f64>(&mut ctx, a),
        (Command::Eval(a), _) => cmd_eval(&mut ctx, a),
        (Command::Report(a), _) => cmd_report(&mut ctx, a),
        (Command::Selftest, _) => cmd_selftest(&mut ctx),
    }
}

/// Runs one command line, writing progress to `stdout` and errors to
/// stderr; returns the process exit code.
pub fn run_with<I, S>(argv: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Data(DataError::NoOverlap).exit_code(), 2);
        assert_eq!(
            CliError::Net(NetError::DivergenceDetected { epoch: 3 }).exit_code(),
            3
        );
        assert_eq!(
            CliError::Deform(DeformError::FrameNonConvergence {
                frame: 1,
                residual: 1.0
            })
            .exit_code(),
            3
        );
        assert_eq!(CliError::Deform(DeformError::NoContact).exit_code(), 2);
    }

    #[test]
    fn flags_become_overrides() {
        let cli = Cli::try_parse_from([
            "pressim",
            "--seed",
            "9",
            "train",
            "--lr",
            "1e-3",
            "--set",
            "train.batch=4",
        ])
        .unwrap();
        let o = override_pairs(&cli).unwrap();
        assert_eq!(
            o,
            vec![
                ("train.batch".to_string(), "4".to_string()),
                ("seed".to_string(), "9".to_string()),
                ("train.lr".to_string(), "0.001".to_string()),
            ]
        );
        let cli = Cli::try_parse_from(["pressim", "--set", "nokey", "selftest"]).unwrap();
        assert!(matches!(override_pairs(&cli), Err(CliError::Usage(_))));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        let mut sink = Vec::new();
        assert_eq!(run_with(["pressim", "gen", "--bogus"], &mut sink), 1);
        assert_eq!(
            run_with(["pressim", "--precision", "f16", "selftest"], &mut sink),
            1
        );
        assert_eq!(run_with(["pressim", "--help"], &mut sink), 0);
    }
}
