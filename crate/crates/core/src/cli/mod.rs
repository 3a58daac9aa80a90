//! The `tactile-force` command-line tool.

pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::LinearModel;
use crate::dataset::{
    make_dataset, read_samples, write_samples, Dataset, ForceSample, SourceSet, SplitConfig,
    SplitManifest,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, fit_linear_baseline, run_ablation, standard_recipes, train_mlp_baseline,
    train_recipe, write_rows_csv, AblationSummary, ExperimentConfig, ForceModel, Recipe,
    EVAL_CSV_COLUMNS, LINEAR_LABEL,
};
use crate::mechanics::{
    infer_force_frictionless, infer_force_with_friction, EpisodeRecord, FrictionRegime,
    ParticleGrid, PushParams, SolverMethod,
};
use crate::nn::{Checkpoint, EpochStats};
use crate::sensor::{ElectrodeLayout, SurfaceGeometry};
use crate::synth::{generate, SynthConfig, Trial};
use manifest::{entry, write_atomic, write_json, FileEntry, RunManifest, MANIFEST_NAME};

const INFER_COLUMNS: &str = "CSV columns: step (record index), t (s), f_x, f_y (inferred contact force in the object frame, N), \
objective (residual at the solution), regime (sliding | static; static steps carry no friction information)";

const CURVE_COLUMNS: &str = "curves.csv columns: epoch, train_loss, val_loss, learning_rate (rate of the epoch's last batch), \
skipped (training samples below the loss magnitude floor)";

#[derive(Debug, Parser)]
#[command(
    name = "tactile-force",
    version,
    about = "Tactile force estimation from simulation to evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic trials, one JSON file per trial under OUT/trials.
    Simulate(SimulateArgs),
    /// Infer per-step contact forces from a pushing episode's motion.
    #[command(after_help = INFER_COLUMNS)]
    Infer(InferArgs),
    /// Filter force samples and split whole trials into train/val/test.
    Dataset(DatasetArgs),
    /// Train a force model on a dataset directory.
    #[command(after_help = CURVE_COLUMNS)]
    Train(TrainArgs),
    /// Evaluate a model on the test split, or run the full ablation study.
    #[command(after_help = format!("per_sample.csv columns: {EVAL_CSV_COLUMNS}. summary.json holds median, quartiles \
and 1.5·IQR whiskers per model, overall and per source."))]
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config JSON; `planar.m` is required.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Trial JSON from `simulate`, or a JSON-lines episode (needs --params).
    #[arg(long)]
    pub episode: PathBuf,
    /// JSON with `params` (m, I, mu_s, n, k) and `half_extents`; overrides the trial's own.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value = "closed_form")]
    pub method: SolverMethod,
    /// Ignore support friction.
    #[arg(long)]
    pub frictionless: bool,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Directory of trial JSON files.
    #[arg(long)]
    pub trials: PathBuf,
    /// Split fractions JSON `{train, val}`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Network,
    Mlp,
    Linear,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory from `dataset`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Experiment config JSON (network, training, loss, input scaling).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// rigid-ft, planar-pushing, ball-ft or mixed.
    #[arg(long, default_value = "mixed")]
    pub sources: SourceSet,
    #[arg(long, value_enum, default_value = "network")]
    pub model: ModelKind,
    /// Feed `[e, s_c]` to the dense layers instead of the voxel grid.
    #[arg(long)]
    pub no_voxel: bool,
    /// Disable the normal-alignment loss weight.
    #[arg(long)]
    pub no_alpha: bool,
    /// Overrides the network and training seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory; models are scored on its test split.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Network checkpoint from `train`.
    #[arg(long, conflicts_with_all = ["linear", "ablation"])]
    pub checkpoint: Option<PathBuf>,
    /// Linear model JSON from `train --model linear`.
    #[arg(long, conflicts_with = "ablation")]
    pub linear: Option<PathBuf>,
    /// Train and score the voxel × α matrix, every source combination and both baselines.
    #[arg(long)]
    pub ablation: bool,
    /// Experiment config for --ablation.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let recorded: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(cli, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Run {
    command: &'static str,
    args: Vec<String>,
    config_path: Option<PathBuf>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Run {
    fn new(command: &'static str, args: Vec<String>) -> Self {
        Run {
            command,
            args,
            config_path: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn finish(self, out_dir: &Path) -> Result<()> {
        let hash = |paths: &[PathBuf]| -> Result<Vec<FileEntry>> {
            paths.iter().map(|p| entry(p)).collect()
        };
        let mut inputs = hash(&self.inputs)?;
        if let Some(c) = &self.config_path {
            inputs.insert(0, entry(c)?);
        }
        let m = RunManifest {
            command: self.command.to_string(),
            args: self.args,
            config_path: self.config_path.map(|p| p.display().to_string()),
            seed: self.seed,
            inputs,
            outputs: hash(&self.outputs)?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        write_json(&out_dir.join(MANIFEST_NAME), &m)
    }
}

fn execute(cli: Cli, args: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, args),
        Command::Infer(a) => cmd_infer(a, args),
        Command::Dataset(a) => cmd_dataset(a, args),
        Command::Train(a) => cmd_train(a, args),
        Command::Eval(a) => cmd_eval(a, args),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Error::config(format!("{}: {e}", p.display()))),
    }
}

pub fn cmd_simulate(a: SimulateArgs, args: Vec<String>) -> Result<()> {
    let mut run = Run::new("simulate", args);
    let mut cfg = SynthConfig::from_json(&read_text(&a.config)?)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    run.config_path = Some(a.config.clone());
    run.seed = Some(cfg.seed);
    let trials = generate(&cfg)?;
    let dir = a.out.join("trials");
    for t in &trials {
        let path = dir.join(format!("{}.json", t.trial_id));
        let text = serde_json::to_string(t).map_err(|e| Error::json(&t.trial_id, e))?;
        write_atomic(&path, text.as_bytes())?;
        run.outputs.push(path);
    }
    run.finish(&a.out)
}

/// Episode parameters for bare JSON-lines inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSetup {
    pub params: PushParams,
    pub half_extents: [f64; 2],
}

#[derive(Debug, Serialize)]
struct InferRow {
    step: usize,
    t: f64,
    f_x: f64,
    f_y: f64,
    objective: f64,
    regime: &'static str,
}

fn load_episode(a: &InferArgs) -> Result<(Vec<EpisodeRecord>, InferSetup)> {
    let setup = a
        .params
        .as_deref()
        .map(|p| -> Result<InferSetup> {
            serde_json::from_str(&read_text(p)?)
                .map_err(|e| Error::config(format!("{}: {e}", p.display())))
        })
        .transpose()?;
    let is_jsonl = a.episode.extension().is_some_and(|e| e == "jsonl");
    if is_jsonl {
        let f = fs::File::open(&a.episode).map_err(|e| Error::io(&a.episode, e))?;
        let records = crate::mechanics::read_episode(BufReader::new(f))?;
        let setup =
            setup.ok_or_else(|| Error::config("--params is required for JSON-lines episodes"))?;
        return Ok((records, setup));
    }
    let trial: Trial = serde_json::from_str(&read_text(&a.episode)?)
        .map_err(|e| Error::schema(format!("{}: {e}", a.episode.display())))?;
    let ep = trial
        .episode
        .ok_or_else(|| Error::schema(format!("trial {} has no motion records", trial.trial_id)))?;
    let setup = setup.unwrap_or(InferSetup {
        params: ep.params,
        half_extents: ep.half_extents,
    });
    Ok((ep.records, setup))
}

pub fn cmd_infer(a: InferArgs, args: Vec<String>) -> Result<()> {
    let mut run = Run::new("infer", args);
    run.inputs.push(a.episode.clone());
    if let Some(p) = &a.params {
        run.inputs.push(p.clone());
    }
    let (records, setup) = load_episode(&a)?;
    let params = setup.params;
    params.validate()?;
    let grid = ParticleGrid::rectangle(setup.half_extents, &params)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for (k, rec) in records.iter().enumerate() {
        let motion = rec.motion().in_object_axes();
        if !motion.is_finite() {
            return Err(Error::schema(format!("record {k} has non-finite motion")));
        }
        let est = if a.frictionless {
            infer_force_frictionless(&motion, rec.contact(), &params, a.method)?
        } else {
            infer_force_with_friction(&motion, rec.contact(), &grid, &params, a.method)?
        };
        let f = est.planar();
        w.serialize(InferRow {
            step: k,
            t: rec.t,
            f_x: f.x,
            f_y: f.y,
            objective: est.objective,
            regime: match est.regime {
                FrictionRegime::Sliding => "sliding",
                FrictionRegime::Static => "static",
            },
        })
        .map_err(|e| Error::schema(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::schema(format!("csv: {e}")))?;
    write_atomic(&a.out, &bytes)?;
    run.outputs.push(a.out.clone());
    run.finish(
        a.out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new(".")),
    )
}

fn trial_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::config(format!(
            "no trial files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

pub const SPLIT_NAME: &str = "split.json";
const SPLITS: [&str; 3] = ["train", "val", "test"];

pub fn cmd_dataset(a: DatasetArgs, args: Vec<String>) -> Result<()> {
    let mut run = Run::new("dataset", args);
    let split: SplitConfig = read_config(a.config.as_deref())?;
    run.config_path = a.config.clone();
    run.seed = Some(a.seed);
    let files = trial_files(&a.trials)?;
    let mut trials = Vec::with_capacity(files.len());
    for f in &files {
        let t: Trial = serde_json::from_str(&read_text(f)?)
            .map_err(|e| Error::schema(format!("{}: {e}", f.display())))?;
        trials.push(t.samples());
    }
    run.inputs = files;
    let ds = make_dataset(&trials, split, a.seed)?;
    for (name, set) in SPLITS.iter().zip([&ds.train, &ds.val, &ds.test]) {
        let mut buf = Vec::new();
        write_samples(&mut buf, set)?;
        let path = a.out.join(format!("{name}.jsonl"));
        write_atomic(&path, &buf)?;
        run.outputs.push(path);
    }
    let path = a.out.join(SPLIT_NAME);
    write_json(&path, &ds.manifest)?;
    run.outputs.push(path);
    run.finish(&a.out)
}

/// Reads a dataset directory and checks every sample against the split manifest.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(SPLIT_NAME);
    let manifest: SplitManifest = serde_json::from_str(&read_text(&mpath)?)
        .map_err(|e| Error::schema(format!("{}: {e}", mpath.display())))?;
    manifest.check_disjoint()?;
    let mut sets: Vec<Vec<ForceSample>> = Vec::new();
    for (name, ids) in SPLITS
        .iter()
        .zip([&manifest.train, &manifest.val, &manifest.test])
    {
        let path = dir.join(format!("{name}.jsonl"));
        let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let samples = read_samples(BufReader::new(f))?;
        if let Some(s) = samples.iter().find(|s| !ids.contains(&s.trial_id)) {
            return Err(Error::Integrity(format!(
                "{}: trial {} is not listed in the {name} split",
                path.display(),
                s.trial_id
            )));
        }
        sets.push(samples);
    }
    let test = sets.pop().unwrap_or_default();
    let val = sets.pop().unwrap_or_default();
    let train = sets.pop().unwrap_or_default();
    Ok(Dataset {
        train,
        val,
        test,
        manifest,
    })
}

fn dataset_inputs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = SPLITS
        .iter()
        .map(|n| dir.join(format!("{n}.jsonl")))
        .collect();
    v.push(dir.join(SPLIT_NAME));
    v
}

fn apply_seed(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.network.seed = s;
        cfg.training.seed = s;
        cfg.mlp.seed = s;
    }
}

/// The default geometry and its synthetic layout; data from `simulate` uses both.
fn sensor_layout() -> (SurfaceGeometry, ElectrodeLayout) {
    let g = SurfaceGeometry::default();
    let l = ElectrodeLayout::synthetic(&g);
    (g, l)
}

fn curves_csv(epochs: &[EpochStats]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in epochs {
        w.serialize(e)
            .map_err(|e| Error::schema(format!("csv: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::schema(format!("csv: {e}")))
}

pub fn cmd_train(a: TrainArgs, args: Vec<String>) -> Result<()> {
    let mut run = Run::new("train", args);
    let mut cfg: ExperimentConfig = read_config(a.config.as_deref())?;
    apply_seed(&mut cfg, a.seed);
    run.config_path = a.config.clone();
    run.seed = Some(cfg.training.seed);
    run.inputs = dataset_inputs(&a.dataset);
    let ds = load_dataset(&a.dataset)?;
    let (geometry, layout) = sensor_layout();
    let ds = Dataset {
        train: crate::eval::filter_sources(&ds.train, a.sources),
        val: crate::eval::filter_sources(&ds.val, a.sources),
        test: Vec::new(),
        manifest: ds.manifest,
    };
    match a.model {
        ModelKind::Linear => {
            let model = fit_linear_baseline(&ds, &layout)?;
            let path = a.out.join("linear.json");
            write_json(&path, &model)?;
            run.outputs.push(path);
        }
        ModelKind::Network | ModelKind::Mlp => {
            let trained = if a.model == ModelKind::Mlp {
                train_mlp_baseline(&cfg, &ds)?
            } else {
                let recipe = Recipe {
                    voxel: !a.no_voxel,
                    alpha: !a.no_alpha,
                    sources: a.sources,
                };
                train_recipe(&recipe, &cfg, &geometry, &layout, &ds)?
            };
            let path = a.out.join("checkpoint.json");
            write_atomic(&path, trained.checkpoint.to_json()?.as_bytes())?;
            run.outputs.push(path);
            let curves = a.out.join("curves.csv");
            write_atomic(&curves, &curves_csv(&trained.report.epochs)?)?;
            run.outputs.push(curves);
        }
    }
    run.finish(&a.out)
}

fn write_eval(
    out: &Path,
    run: &mut Run,
    rows: &[crate::eval::EvalRow],
    summary: &AblationSummary,
) -> Result<()> {
    let mut buf = Vec::new();
    write_rows_csv(&mut buf, rows)?;
    let csv_path = out.join("per_sample.csv");
    write_atomic(&csv_path, &buf)?;
    run.outputs.push(csv_path);
    let sum_path = out.join("summary.json");
    write_json(&sum_path, summary)?;
    run.outputs.push(sum_path);
    Ok(())
}

pub fn cmd_eval(a: EvalArgs, args: Vec<String>) -> Result<()> {
    let mut run = Run::new("eval", args);
    run.inputs = dataset_inputs(&a.dataset);
    let ds = load_dataset(&a.dataset)?;
    if a.ablation {
        let mut cfg: ExperimentConfig = read_config(a.config.as_deref())?;
        apply_seed(&mut cfg, a.seed);
        run.config_path = a.config.clone();
        run.seed = Some(cfg.training.seed);
        let (geometry, layout) = sensor_layout();
        let out = run_ablation(&cfg, &standard_recipes(), &geometry, &layout, &ds)?;
        for ckpt in &out.checkpoints {
            let name = ckpt.metadata.label.replace('/', "__");
            let path = a.out.join("checkpoints").join(format!("{name}.json"));
            write_atomic(&path, ckpt.to_json()?.as_bytes())?;
            run.outputs.push(path);
        }
        let path = a.out.join("linear.json");
        write_json(&path, &out.linear)?;
        run.outputs.push(path);
        write_eval(&a.out, &mut run, &out.rows, &out.summary)?;
        return run.finish(&a.out);
    }
    let (label, model): (String, Box<dyn ForceModel>) = match (&a.checkpoint, &a.linear) {
        (Some(p), None) => {
            run.inputs.push(p.clone());
            let ckpt = Checkpoint::load(p)?;
            (ckpt.metadata.label.clone(), Box::new(ckpt.to_model()?))
        }
        (None, Some(p)) => {
            run.inputs.push(p.clone());
            let m: LinearModel = serde_json::from_str(&read_text(p)?)
                .map_err(|e| Error::schema(format!("{}: {e}", p.display())))?;
            (LINEAR_LABEL.to_string(), Box::new(m))
        }
        _ => {
            return Err(Error::config(
                "pass exactly one of --checkpoint, --linear or --ablation",
            ))
        }
    };
    let (rows, report) = evaluate(&label, model.as_ref(), &ds.test)?;
    let summary = AblationSummary {
        test_samples: ds.test.len(),
        models: vec![report],
    };
    write_eval(&a.out, &mut run, &rows, &summary)?;
    run.finish(&a.out)
}
