//! `ctp` subcommands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctp_core::data::{bias_stats, leave_one_out, BiasThresholds, SceneData, SceneWindow};
use ctp_core::forge::{biased_pair, ScenarioConfig};
use ctp_core::harness::{
    aggregate, evaluate_window, sample_predictions, train_with, window_rng, Checkpoint, LogRecord, Sampling,
};
use ctp_core::model::ModelConfig;

use crate::checkpoint;
use crate::config::{normalized, validate_config, DataConfig, RunConfig};
use crate::error::{io_err, CtpError, Result};
use crate::formats::*;
use crate::report::{bias_svg, results_csv, results_rows, trajectory_svg, TrajectoryPanel};
use crate::timing::time_inference;

pub const SEED_ENV: &str = "CTP_SEED";

#[derive(Parser, Debug)]
#[command(name = "ctp", version, about = "Counterfactual trajectory prediction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate trajectory files and write a windowed dataset bundle.
    Ingest(IngestArgs),
    /// Interaction statistics per environment, as CSV.
    Stats(StatsArgs),
    /// Generate a biased synthetic train/test pair with label sidecars.
    Synth(SynthArgs),
    /// Train a model; writes checkpoint, best, log and config.toml.
    Train(TrainArgs),
    /// Best-of-K evaluation into a metrics CSV.
    Eval(EvalArgs),
    /// Single-pass and causal dual-pass inference timing.
    Time(TimeArgs),
    /// SVG figures and a consolidated results table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Trajectory files or directories of `*.txt` files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub train_stride: usize,
    #[arg(long, default_value_t = 20)]
    pub test_stride: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub stride: usize,
    #[arg(long, default_value_t = 3.0)]
    pub neighbor_radius: f64,
    #[arg(long, default_value_t = 15.0)]
    pub parallel_heading_deg: f64,
    #[arg(long, default_value_t = 2.0)]
    pub parallel_distance: f64,
    #[arg(long, default_value_t = 4.0)]
    pub meet_far: f64,
    #[arg(long, default_value_t = 1.0)]
    pub meet_near: f64,
    #[arg(long, default_value_t = 2.0)]
    pub gather_distance: f64,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "synth")]
    pub name: String,
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0.9)]
    pub p_train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p_test: f64,
    #[arg(long, default_value_t = 1)]
    pub walkers_min: usize,
    #[arg(long, default_value_t = 3)]
    pub walkers_max: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub parallel_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gather_rate: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingArg {
    Stochastic,
    Mean,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluation data; defaults to the test data named in the run's config.toml.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model configuration the checkpoint must match.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 20)]
    pub stride: usize,
    #[arg(long, value_enum, default_value_t = SamplingArg::Stochastic)]
    pub sampling: SamplingArg,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TimeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 20)]
    pub stride: usize,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long, requires = "data")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Windows drawn in trajectories.svg.
    #[arg(long, default_value_t = 8)]
    pub windows: usize,
    #[arg(long, default_value_t = 20)]
    pub stride: usize,
    /// Bias statistics CSVs for bias.svg.
    #[arg(long)]
    pub stats: Vec<PathBuf>,
    /// Metrics CSVs for results.csv.
    #[arg(long)]
    pub metrics: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` and runs the subcommand. Returns the process exit code;
/// errors and usage go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Time(a) => time(a),
        Command::Report(a) => report(a),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CtpError::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut files = Vec::new();
    for p in &a.input {
        files.extend(scene_files(p)?);
    }
    let mut scenes = Vec::new();
    for f in &files {
        let obs = read_observations(f)?;
        let name = scene_name(f);
        let train = ctp_core::data::build_windows(&name, &obs, a.train_stride).map_err(crate::error::in_file(f))?;
        let test = ctp_core::data::build_windows(&name, &obs, a.test_stride).map_err(crate::error::in_file(f))?;
        if scenes.iter().any(|(n, ..): &(String, _, _, _)| *n == name) {
            return Err(CtpError::Input {
                path: f.clone(),
                detail: format!("scene name `{name}` appears twice"),
            });
        }
        scenes.push((name, obs, train.len(), test.len()));
    }
    make_dir(&a.out)?;
    let mut index = csv::Writer::from_writer(Vec::new());
    index.write_record(["scene", "observations", "train_windows", "test_windows"])?;
    for (name, obs, tr, te) in &scenes {
        write_file(&a.out.join(format!("{name}.txt")), observations_text(obs).as_bytes())?;
        index.write_record([name.clone(), obs.len().to_string(), tr.to_string(), te.to_string()])?;
    }
    let index = index.into_inner().map_err(|e| CtpError::Format(e.to_string()))?;
    write_file(&a.out.join("windows.csv"), &index)
}

fn stats(a: StatsArgs) -> Result<()> {
    let th = BiasThresholds {
        neighbor_radius: a.neighbor_radius,
        parallel_heading_deg: a.parallel_heading_deg,
        parallel_distance: a.parallel_distance,
        meet_far: a.meet_far,
        meet_near: a.meet_near,
        gather_distance: a.gather_distance,
        ..BiasThresholds::default()
    };
    th.validate()?;
    let mut reports = Vec::new();
    for p in &a.input {
        for f in scene_files(p)? {
            let windows = load_scene(&f, a.stride)?;
            reports.push(bias_stats(&scene_name(&f), &windows, &th)?);
        }
    }
    write_file(&a.out, &bias_csv(&reports)?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let cfg = ScenarioConfig {
        name: a.name.clone(),
        scenes: a.scenes,
        walkers_min: a.walkers_min,
        walkers_max: a.walkers_max,
        noise: a.noise,
        parallel_rate: a.parallel_rate,
        gather_rate: a.gather_rate,
        seed,
        ..ScenarioConfig::default()
    };
    let (train, test) = biased_pair(&cfg, a.p_train, a.p_test)?;
    make_dir(&a.out)?;
    for (set, split) in [(&train, "train"), (&test, "test")] {
        let stem = format!("{}-{split}", a.name);
        let text = observations_text(&windows_to_observations(&set.windows));
        write_file(&a.out.join(format!("{stem}.txt")), text.as_bytes())?;
        write_file(&a.out.join(format!("{stem}.labels.csv")), &labels_csv(&set.labels)?)?;
    }
    Ok(())
}

/// Reads a configuration file, turning its issue list into one error.
pub fn read_config(path: &Path) -> Result<(RunConfig, bool)> {
    let text = read_text(path)?;
    let parsed = validate_config(&text).map_err(CtpError::Config)?;
    Ok((parsed.config, parsed.seed_given))
}

fn resolve(base: &Path, p: &str) -> String {
    if p.is_empty() || Path::new(p).is_absolute() {
        return p.to_string();
    }
    let joined = base.join(p);
    fs::canonicalize(&joined)
        .unwrap_or(joined)
        .to_string_lossy()
        .into_owned()
}

/// Training and held-out windows named by a data section.
pub fn load_split(d: &DataConfig) -> Result<(Vec<SceneWindow>, Vec<SceneWindow>)> {
    if !d.train.is_empty() {
        return Ok((
            load_windows(Path::new(&d.train), d.train_stride)?,
            load_windows(Path::new(&d.test), d.test_stride)?,
        ));
    }
    if d.dir.is_empty() {
        return Err(CtpError::Usage("the configuration names no data ([data] train/test or dir/held_out)".into()));
    }
    let mut scenes = Vec::new();
    for f in scene_files(Path::new(&d.dir))? {
        scenes.push(SceneData {
            name: scene_name(&f),
            train_windows: load_scene(&f, d.train_stride)?,
            test_windows: load_scene(&f, d.test_stride)?,
        });
    }
    let split = leave_one_out(&scenes)?
        .into_iter()
        .find(|s| s.held_out == d.held_out)
        .ok_or_else(|| CtpError::Usage(format!("held-out scene `{}` is not in {}", d.held_out, d.dir)))?;
    Ok((split.train, split.test))
}

fn train(a: TrainArgs) -> Result<()> {
    let (mut config, seed_given) = read_config(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let d = &mut config.data;
    for p in [&mut d.train, &mut d.test, &mut d.dir] {
        *p = resolve(&base, p);
    }
    config.train.seed = match a.seed {
        Some(s) => s,
        None if seed_given => config.train.seed,
        None => env_seed()?.unwrap_or(config.train.seed),
    };
    if let Some(e) = a.epochs {
        config.train.epochs = e;
    }
    config.train.validate()?;
    let (train_windows, val_windows) = load_split(&config.data)?;
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(CtpError::Usage(format!(
            "no usable windows: {} training, {} held-out",
            train_windows.len(),
            val_windows.len()
        )));
    }
    make_dir(&a.out)?;
    let log_path = a.out.join("log");
    let mut log = format!("{LOG_HEADER}\n");
    write_file(&log_path, log.as_bytes())?;
    let mut on_epoch = |r: &LogRecord| {
        log.push_str(&log_line(r));
        log.push('\n');
        let _ = fs::write(&log_path, &log);
    };
    let outcome = train_with(&config.train, &train_windows, &val_windows, &mut on_epoch)?;
    let log_text = outcome.log.iter().fold(format!("{LOG_HEADER}\n"), |mut s, r| {
        s.push_str(&log_line(r));
        s.push('\n');
        s
    });
    write_file(&log_path, log_text.as_bytes())?;
    checkpoint::save(&a.out.join("checkpoint"), &outcome.final_checkpoint)?;
    checkpoint::save(&a.out.join("best"), &outcome.best_checkpoint)?;
    write_file(&a.out.join("config.toml"), normalized(&config).as_bytes())
}

/// The run configuration stored beside a checkpoint, if any.
fn sibling_config(checkpoint: &Path) -> Result<Option<RunConfig>> {
    let p = checkpoint.parent().unwrap_or(Path::new(".")).join("config.toml");
    if !p.is_file() {
        return Ok(None);
    }
    Ok(Some(read_config(&p)?.0))
}

fn eval_windows(checkpoint: &Path, data: Option<&Path>, stride: usize) -> Result<Vec<SceneWindow>> {
    let windows = match data {
        Some(p) => load_windows(p, stride)?,
        None => match sibling_config(checkpoint)? {
            Some(c) => load_split(&c.data)?.1,
            None => {
                return Err(CtpError::Usage(
                    "no --data given and no config.toml next to the checkpoint".into(),
                ))
            }
        },
    };
    if windows.is_empty() {
        return Err(CtpError::Usage("no evaluation windows".into()));
    }
    Ok(windows)
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let expected: Option<ModelConfig> = match &a.config {
        Some(p) => Some(read_config(p)?.0.train.model),
        None => None,
    };
    let model = ck.restore(expected.as_ref())?;
    let spec = ck.eval_spec();
    let windows = eval_windows(&a.checkpoint, a.data.as_deref(), a.stride)?;
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let sampling = match a.sampling {
        SamplingArg::Stochastic => Sampling::Stochastic,
        SamplingArg::Mean => Sampling::Mean,
    };
    let per_window = windows
        .iter()
        .enumerate()
        .map(|(i, w)| evaluate_window(&model, spec.as_ref(), w, i, a.k, seed, sampling))
        .collect::<ctp_core::Result<Vec<_>>>()?;
    let ev = aggregate(per_window, &a.split, a.k, seed);
    write_file(&a.out, &metrics_csv(&ev.records)?)
}

fn time(a: TimeArgs) -> Result<()> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let model = ck.restore(None)?;
    let windows = eval_windows(&a.checkpoint, a.data.as_deref(), a.stride)?;
    let single = time_inference(&model, None, &windows, a.repetitions)?;
    let spec = ck
        .eval_spec()
        .unwrap_or_else(|| ctp_core::causal::InterventionSpec::new(ck.settings.intervention, 0));
    let dual = time_inference(&model, Some(&spec), &windows, a.repetitions)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "family",
        "parameters",
        "windows",
        "repetitions",
        "single_sec_per_window",
        "dual_sec_per_window",
        "ratio",
    ])?;
    w.write_record([
        ck.family.name().to_string(),
        ck.parameter_count().to_string(),
        windows.len().to_string(),
        a.repetitions.to_string(),
        single.mean.to_string(),
        dual.mean.to_string(),
        (dual.mean / single.mean).to_string(),
    ])?;
    write_file(&a.out, &w.into_inner().map_err(|e| CtpError::Format(e.to_string()))?)
}

fn report(a: ReportArgs) -> Result<()> {
    if a.checkpoint.is_none() && a.stats.is_empty() && a.metrics.is_empty() {
        return Err(CtpError::Usage("report needs --checkpoint/--data, --stats or --metrics".into()));
    }
    let mut outputs: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    if let (Some(ckp), Some(data)) = (&a.checkpoint, &a.data) {
        let ck: Checkpoint = checkpoint::load(ckp)?;
        let model = ck.restore(None)?;
        let spec = ck.eval_spec();
        let windows = load_windows(data, a.stride)?;
        let mut panels = Vec::new();
        for (i, w) in windows.iter().take(a.windows).enumerate() {
            let mut pred = sample_predictions(&model, spec.as_ref(), w, 1, &mut window_rng(0, i), Sampling::Mean)?;
            panels.push(TrajectoryPanel {
                window: w,
                prediction: pred.remove(0),
            });
        }
        outputs.push((a.out.join("trajectories.svg"), trajectory_svg(&panels).into_bytes()));
    }
    if !a.stats.is_empty() {
        let mut reports = Vec::new();
        for p in &a.stats {
            reports.extend(parse_bias(&read_text(p)?).map_err(|e| CtpError::Input {
                path: p.clone(),
                detail: e.to_string(),
            })?);
        }
        outputs.push((a.out.join("bias.svg"), bias_svg(&reports).into_bytes()));
    }
    if !a.metrics.is_empty() {
        let mut runs = Vec::new();
        for p in &a.metrics {
            let records = parse_metrics(&read_text(p)?).map_err(|e| CtpError::Input {
                path: p.clone(),
                detail: e.to_string(),
            })?;
            runs.push((p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), records));
        }
        outputs.push((a.out.join("results.csv"), results_csv(&results_rows(&runs))?));
    }
    make_dir(&a.out)?;
    for (p, bytes) in outputs {
        write_file(&p, &bytes)?;
    }
    Ok(())
}
