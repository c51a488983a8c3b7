//! Command-line front end: `run`, `synth` and `eval`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, PointSet2};
use crate::ingest::{load_dataset, synchronize};
use crate::pipeline::{run_dataset, TRAJECTORY_FILE};
use crate::synth_world::{generate, ScenarioSpec};

pub const EVAL_TEXT_FILE: &str = "eval.txt";
pub const EVAL_JSON_FILE: &str = "eval.json";

#[derive(Debug, Parser)]
#[command(name = "ratslam", version, about = "Offline RatSLAM on recorded or synthetic datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run SLAM over a dataset directory and write the map, logs and overlay.
    Run(RunArgs),
    /// Generate a synthetic dataset from a scenario file.
    Synth(SynthArgs),
    /// Compare a run's trajectory with the dataset's ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one parameter; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the pose-cell volume after every step.
    #[arg(long)]
    pub dump_volumes: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replace the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Output directory of a previous `run`.
    pub run: PathBuf,
    pub dataset: PathBuf,
    /// Rigidly align the estimate to ground truth before measuring.
    #[arg(long)]
    pub align: bool,
    /// Also write eval.txt and eval.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn resolve_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(args.config.as_deref(), &args.overrides)?;
    let stream = load_dataset(&args.dataset)?;
    let steps = synchronize(&stream);
    let slam = run_dataset(&stream, &steps, &cfg, &args.out, args.dump_volumes)?;
    println!(
        "{} steps, {} templates, {} experiences, {} links -> {}",
        steps.len(),
        slam.views().len(),
        slam.map().len(),
        slam.map().links().len(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let mut spec = ScenarioSpec::parse(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    generate(&spec, &args.out)?;
    println!("{} frames -> {}", spec.frame_count(), args.out.display());
    Ok(())
}

/// Reads `step,timestamp,experience,x,y,theta` rows as `(step, (x, y))`.
pub fn read_trajectory(path: &Path) -> Result<Vec<(usize, (f64, f64))>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Dataset(format!("{}: {other:?}", path.display())),
    })?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = || Error::Dataset(format!("{}: malformed row {:?}", path.display(), rec));
        let step = field(0).parse().map_err(|_| bad())?;
        let x = field(3).parse().map_err(|_| bad())?;
        let y = field(4).parse().map_err(|_| bad())?;
        out.push((step, (x, y)));
    }
    Ok(out)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let traj = read_trajectory(&args.run.join(TRAJECTORY_FILE))?;
    let stream = load_dataset(&args.dataset)?;
    if !stream.has_ground_truth() {
        return Err(Error::MissingData("dataset has no ground truth".into()));
    }
    let steps = synchronize(&stream);
    let mut gt = Vec::new();
    let mut pairs = Vec::new();
    for (i, &(step, _)) in traj.iter().enumerate() {
        if let Some(g) = steps.get(step).and_then(|s| s.ground_truth) {
            pairs.push((i, gt.len()));
            gt.push(g);
        }
    }
    if gt.is_empty() {
        return Err(Error::MissingData("no ground truth overlaps the trajectory".into()));
    }
    let est = PointSet2::new(traj.iter().map(|t| t.1).collect());
    let report = evaluate(&est, &PointSet2::new(gt), &pairs, args.align)?;
    print!("{}", report.to_text());
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        for (name, body) in [(EVAL_TEXT_FILE, report.to_text()), (EVAL_JSON_FILE, report.to_json())] {
            let path = out.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
    }
}
