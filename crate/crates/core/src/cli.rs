//! The `iconcl` command line: `generate | train | predict | eval`.
//!
//! A run is described by one TOML file. Every section is optional and is
//! merged key by key over the preset named by `preset` (`desk` or `paper`):
//!
//! ```toml
//! preset = "desk"
//! seed = 7
//! out_dir = "runs/desk"
//!
//! [operators]
//! count = 20
//!
//! [train]
//! total_steps = 2000
//! loss_mix = "forward_consistency"
//! ```

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    coefficient_grid, generate_operator_datasets, read_dataset, sample_training_fluxes,
    write_dataset, Direction, GenerationConfig, OperatorDataset, PAIRS_FILE,
};
use crate::error::{Error, Result};
use crate::evalkit::{
    cov_sweep, generalization_study, grid_eval, similar_cubics, stride_sweep, write_curves,
    GridEvalConfig, StudyConfig,
};
use crate::flux::FluxSpec;
use crate::grid::Record;
use crate::inference::{
    read_prediction, recursive_rollout, write_prediction, IconModel, RolloutPlan,
};
use crate::model::{load_checkpoint, ModelConfig};
use crate::rng::derive_labeled;
use crate::storage;
use crate::training::{train, LossMix, TrainConfig, TrainOptions, CHECKPOINT_DIR};

pub const THREADS_ENV: &str = "ICONCL_THREADS";
pub const DATA_DIR: &str = "data";
pub const TRAIN_DIR: &str = "train";
pub const EVAL_DIR: &str = "eval";
pub const DATA_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorsSection {
    /// Number of cubic fluxes drawn from `[-1, 1]^3` when `fluxes` is empty.
    pub count: usize,
    /// Explicit flux list, e.g. `["cubic:0.1,0.2,0.3", "sincos"]`.
    pub fluxes: Vec<FluxSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    /// Coefficient grid resolution for the in-distribution study.
    pub grid_k: usize,
    pub grid: GridEvalConfig,
    /// Fluxes for the generalization and change-of-variables studies.
    pub fluxes: Vec<FluxSpec>,
    /// Rollout settings; the direction field is overridden per study.
    pub study: StudyConfig,
    /// Change-of-variables half-widths; zero means off.
    pub cov_settings: Vec<f64>,
    pub strides: Vec<f64>,
    pub stride_fluxes: Vec<FluxSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    /// Root seed for data, initialization, sampling and evaluation.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub operators: OperatorsSection,
    pub generation: GenerationConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

/// Keys that presets may leave unset.
const OPTIONAL_KEYS: &[&str] = &["clip", "cov_r"];

fn merge(base: &mut toml::Table, over: toml::Table, path: &str) -> Result<()> {
    for (k, v) in over {
        let here = if path.is_empty() {
            k.clone()
        } else {
            format!("{path}.{k}")
        };
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &here)?,
            (Some(slot), v) => *slot = v,
            (None, v) if OPTIONAL_KEYS.contains(&k.as_str()) => {
                base.insert(k, v);
            }
            (None, _) => return Err(Error::Config(format!("unknown config key `{here}`"))),
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (count, generation, model, train, grid, study, grid_k) = match preset {
            Preset::Desk => (
                20,
                GenerationConfig::desk(),
                ModelConfig::desk(),
                TrainConfig::desk(),
                GridEvalConfig::desk(),
                StudyConfig::desk(Direction::Forward),
                3,
            ),
            Preset::Paper => (
                1000,
                GenerationConfig::paper(),
                ModelConfig::paper(),
                TrainConfig::paper(),
                GridEvalConfig::paper(),
                StudyConfig::paper(Direction::Forward),
                11,
            ),
        };
        let grid = GridEvalConfig {
            max_examples: grid.max_examples.min(model.max_pairs - 1),
            ..grid
        };
        let study = StudyConfig {
            examples_per_call: study.examples_per_call.min(model.max_pairs - 1),
            ..study
        };
        RunConfig {
            preset,
            seed: 0,
            out_dir: PathBuf::from("runs").join(match preset {
                Preset::Desk => "desk",
                Preset::Paper => "paper",
            }),
            operators: OperatorsSection {
                count,
                fluxes: Vec::new(),
            },
            generation,
            model,
            train,
            eval: EvalSection {
                grid_k,
                grid,
                fluxes: vec![FluxSpec::SinCos, FluxSpec::Tanh],
                study,
                cov_settings: vec![0.5, 1.0, 2.0, 3.0, 0.0],
                strides: vec![0.01, 0.02, 0.03, 0.04, 0.05],
                stride_fluxes: vec![
                    FluxSpec::SinCos,
                    FluxSpec::SinCos.scaled(3.0).expect("positive factor"),
                ],
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        let preset = match user.get("preset") {
            None => Preset::Desk,
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("invalid preset: {e}")))?,
        };
        let mut base = toml::Table::try_from(RunConfig::preset(preset))
            .map_err(|e| Error::Config(format!("cannot encode preset: {e}")))?;
        merge(&mut base, user, "")?;
        let cfg: RunConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.operators.fluxes.is_empty() && self.operators.count == 0 {
            return Err(Error::Config(
                "no operators: set operators.count or operators.fluxes".into(),
            ));
        }
        for f in self
            .operators
            .fluxes
            .iter()
            .chain(&self.eval.fluxes)
            .chain(&self.eval.stride_fluxes)
        {
            f.validate()?;
        }
        if self.train.seq_len > self.model.max_pairs {
            return Err(Error::Config(format!(
                "train.seq_len {} exceeds model.max_pairs {}",
                self.train.seq_len, self.model.max_pairs
            )));
        }
        Ok(())
    }

    pub fn fluxes(&self) -> Vec<FluxSpec> {
        if self.operators.fluxes.is_empty() {
            sample_training_fluxes(self.operators.count, self.seed)
        } else {
            self.operators.fluxes.clone()
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join(DATA_DIR)
    }

    pub fn train_dir(&self) -> PathBuf {
        self.out_dir.join(TRAIN_DIR)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.train_dir().join(CHECKPOINT_DIR)
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out_dir.join(EVAL_DIR)
    }

    /// Training settings with the seed derived from the root seed.
    pub fn effective_train(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_labeled(self.seed, "train", 0),
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub flux: FluxSpec,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub seed: u64,
    pub generation: GenerationConfig,
    pub operators: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub operators: usize,
    pub skipped: usize,
    pub pairs: usize,
    pub records: usize,
    pub dir: PathBuf,
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    let fluxes = cfg.fluxes();
    let datasets = generate_operator_datasets(&fluxes, &cfg.generation, cfg.seed);
    if datasets.is_empty() {
        return Err(Error::Numeric {
            index: 0,
            context: "every operator failed to simulate".into(),
        });
    }
    let dir = cfg.data_dir();
    storage::ensure_dir(&dir)?;
    let mut entries = Vec::with_capacity(datasets.len());
    for ds in &datasets {
        let name = format!("op_{:05}", ds.id);
        write_dataset(ds, &cfg.generation, &dir.join(&name))?;
        entries.push(ManifestEntry {
            id: ds.id,
            flux: ds.operator.flux.clone(),
            dir: name,
        });
    }
    storage::write_json(
        &dir.join(DATA_MANIFEST),
        &DataManifest {
            seed: cfg.seed,
            generation: cfg.generation.clone(),
            operators: entries,
        },
    )?;
    Ok(GenerateSummary {
        operators: datasets.len(),
        skipped: fluxes.len() - datasets.len(),
        pairs: datasets.iter().map(|d| d.pairs.len()).sum(),
        records: datasets.iter().map(|d| d.records.len()).sum(),
        dir,
    })
}

pub fn load_datasets(dir: &Path) -> Result<Vec<OperatorDataset>> {
    let manifest: DataManifest = storage::read_json(&dir.join(DATA_MANIFEST))?;
    manifest
        .operators
        .iter()
        .map(|e| read_dataset(&dir.join(&e.dir)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_forward_loss: Option<f64>,
    pub dir: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary> {
    let datasets = load_datasets(&cfg.data_dir())?;
    let dir = cfg.train_dir();
    let out = train(
        &cfg.effective_train(),
        &cfg.model,
        &datasets,
        &TrainOptions {
            out_dir: Some(dir.clone()),
            resume,
        },
    )?;
    Ok(TrainSummary {
        steps: cfg.train.total_steps,
        final_forward_loss: out.history.iter().rev().find_map(|r| r.loss_forward),
        dir,
    })
}

/// Reads a record from a dataset directory (by index) or a prediction directory.
pub fn load_record(path: &Path, index: usize) -> Result<Record> {
    if path.join(PAIRS_FILE).exists() {
        let ds = read_dataset(path)?;
        let n = ds.records.len();
        ds.records.into_iter().nth(index).ok_or_else(|| {
            Error::Argument(format!(
                "record {index} requested, {} holds {n}",
                path.display()
            ))
        })
    } else {
        Ok(read_prediction(path)?.0)
    }
}

pub fn cmd_predict(
    checkpoint: &Path,
    record: &Record,
    plan: &RolloutPlan,
    out: &Path,
) -> Result<Record> {
    let ckpt = load_checkpoint(checkpoint)?;
    let stride = ckpt.params.config.grid_stride;
    if !record.n().is_multiple_of(stride) {
        return Err(Error::Shape {
            expected: record.n().next_multiple_of(stride),
            actual: record.n(),
        });
    }
    let model = IconModel::new(ckpt.params);
    let pred = recursive_rollout(&model, record, plan)?;
    write_prediction(&pred, plan, out)?;
    Ok(pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Grid,
    Generalization,
    Cov,
    Stride,
}

fn flux_tag(f: &FluxSpec) -> String {
    f.to_string()
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, studies: &[Study]) -> Result<Vec<PathBuf>> {
    let model = IconModel::new(load_checkpoint(checkpoint)?.params);
    let dir = cfg.eval_dir();
    let mut written = Vec::new();
    let directions = [Direction::Forward, Direction::Reverse];
    for study in studies {
        match study {
            Study::Grid => {
                let data = generate_operator_datasets(
                    &coefficient_grid(cfg.eval.grid_k),
                    &cfg.generation,
                    derive_labeled(cfg.seed, "grid-data", 0),
                );
                let grid = GridEvalConfig {
                    seed: derive_labeled(cfg.seed, "grid-eval", 0),
                    ..cfg.eval.grid.clone()
                };
                let report = grid_eval(&model, &data, &grid)?;
                for (id, why) in &report.skipped {
                    log::warn!("grid operator {id} skipped: {why}");
                }
                let tag = format!("cubic-grid{}", cfg.eval.grid_k);
                written.push(write_curves(
                    &dir,
                    "grid",
                    Direction::Forward,
                    &tag,
                    &[report.forward],
                )?);
                written.push(write_curves(
                    &dir,
                    "grid",
                    Direction::Reverse,
                    &tag,
                    &[report.reverse],
                )?);
            }
            Study::Generalization => {
                for f in &cfg.eval.fluxes {
                    let eqs = similar_cubics(f)?;
                    for &d in &directions {
                        let sc = study_config(cfg, d);
                        let out = generalization_study(&model, f, &eqs, &sc)?;
                        written.push(write_curves(
                            &dir,
                            "comparison1",
                            d,
                            &flux_tag(f),
                            &out.comparison1,
                        )?);
                        written.push(write_curves(
                            &dir,
                            "comparison2",
                            d,
                            &flux_tag(f),
                            &out.comparison2,
                        )?);
                    }
                }
            }
            Study::Cov => {
                let settings: Vec<Option<f64>> = cfg
                    .eval
                    .cov_settings
                    .iter()
                    .map(|&r| (r > 0.0).then_some(r))
                    .collect();
                for f in &cfg.eval.fluxes {
                    for &d in &directions {
                        let curves = cov_sweep(&model, f, &study_config(cfg, d), &settings)?;
                        written.push(write_curves(&dir, "cov", d, &flux_tag(f), &curves)?);
                    }
                }
            }
            Study::Stride => {
                for f in &cfg.eval.stride_fluxes {
                    for &d in &directions {
                        let curves =
                            stride_sweep(&model, f, &study_config(cfg, d), &cfg.eval.strides)?;
                        written.push(write_curves(&dir, "stride", d, &flux_tag(f), &curves)?);
                    }
                }
            }
        }
    }
    Ok(written)
}

fn study_config(cfg: &RunConfig, direction: Direction) -> StudyConfig {
    StudyConfig {
        direction,
        seed: derive_labeled(cfg.seed, "study", 0),
        ..cfg.eval.study.clone()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "iconcl",
    version,
    about = "In-context operator learning for 1D conservation laws"
)]
pub struct Cli {
    /// Worker threads (default: $ICONCL_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate operator datasets.
    Generate(ConfigArgs),
    /// Train a model on generated datasets.
    Train(TrainArgs),
    /// Recursive rollout from a record with a trained checkpoint.
    Predict(PredictArgs),
    /// Run evaluation studies and write CSV curves.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Override the root seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: ConfigArgs,
    /// Continue from the latest checkpoint.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub steps: Option<usize>,
    /// forward_reverse | forward_consistency | forward_only
    #[arg(long)]
    pub loss_mix: Option<LossMix>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset or prediction directory holding the record.
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub record_index: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub t0: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.05)]
    pub max_stride: f64,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value = "forward")]
    pub direction: Direction,
    #[arg(long, default_value_t = 5)]
    pub examples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Change-of-variables half-width; 0 disables.
    #[arg(long, default_value_t = 0.0)]
    pub cov_r: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: ConfigArgs,
    /// Checkpoint directory (default: the run's training checkpoint).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Studies to run (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub study: Vec<Study>,
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::Argument(format!("{THREADS_ENV}={v:?} is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Argument("thread count must be positive".into()));
        }
        // A pool configured earlier in the process stays in place.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let s = cmd_generate(&cfg)?;
            println!(
                "generated {} operators ({} skipped), {} pairs, {} records in {}",
                s.operators,
                s.skipped,
                s.pairs,
                s.records,
                s.dir.display()
            );
        }
        Command::Train(args) => {
            let mut cfg = args.run.load()?;
            if let Some(s) = args.steps {
                cfg.train.total_steps = s;
            }
            if let Some(m) = args.loss_mix {
                cfg.train.loss_mix = m;
            }
            cfg.validate()?;
            let s = cmd_train(&cfg, args.resume)?;
            match s.final_forward_loss {
                Some(l) => println!(
                    "trained {} steps, last forward loss {l:.6}; outputs in {}",
                    s.steps,
                    s.dir.display()
                ),
                None => println!("trained {} steps; outputs in {}", s.steps, s.dir.display()),
            }
        }
        Command::Predict(a) => {
            let record = load_record(&a.record, a.record_index)?;
            let plan = RolloutPlan {
                t0: a.t0,
                dt: a.dt,
                max_stride: a.max_stride,
                horizon: a.horizon,
                direction: a.direction,
                examples_per_call: a.examples,
                seed: a.seed,
                cov_r: (a.cov_r > 0.0).then_some(a.cov_r),
            };
            if a.cov_r < 0.0 {
                return Err(Error::Argument(format!(
                    "--cov-r must be non-negative, got {}",
                    a.cov_r
                )));
            }
            let pred = cmd_predict(&a.checkpoint, &record, &plan, &a.out)?;
            println!(
                "predicted {} frames over [{}, {}] into {}",
                pred.len(),
                pred.t0(),
                pred.t_end(),
                a.out.display()
            );
        }
        Command::Eval(a) => {
            let cfg = a.run.load()?;
            let ckpt = a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_dir());
            let studies = if a.study.is_empty() {
                vec![
                    Study::Grid,
                    Study::Generalization,
                    Study::Cov,
                    Study::Stride,
                ]
            } else {
                a.study.clone()
            };
            for p in cmd_eval(&cfg, &ckpt, &studies)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for p in [Preset::Desk, Preset::Paper] {
            let cfg = RunConfig::preset(p);
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn overrides_merge_over_the_preset() {
        let cfg = RunConfig::from_toml_str(
            "seed = 9\n[train]\ntotal_steps = 12\nloss_mix = \"forward_only\"\n[generation.grf]\nclip = 2.5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.total_steps, 12);
        assert_eq!(cfg.train.loss_mix, LossMix::ForwardOnly);
        assert_eq!(cfg.generation.grf.clip, Some(2.5));
        assert_eq!(cfg.model, ModelConfig::desk());
        let paper = RunConfig::from_toml_str("preset = \"paper\"").unwrap();
        assert_eq!(paper.operators.count, 1000);
        assert_eq!(paper.eval.grid_k, 11);
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        for text in [
            "[train]\ntotal_stepz = 3",
            "seed = \"x\"",
            "[operators]\nfluxes = [\"cubic:1\"]",
            "= =",
        ] {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
    }

    #[test]
    fn parse_failures_exit_with_one() {
        assert_eq!(run(["iconcl", "frobnicate"]), 1);
        assert_eq!(run(["iconcl", "predict", "--t0", "x"]), 1);
        assert_eq!(run(["iconcl", "--help"]), 0);
    }

    #[test]
    fn missing_files_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let code = run([
            "iconcl".as_ref(),
            "predict".as_ref(),
            "--checkpoint".as_ref(),
            dir.path().join("nope").as_os_str(),
            "--record".as_ref(),
            dir.path().as_os_str(),
            "--out".as_ref(),
            dir.path().join("out").as_os_str(),
            "--t0".as_ref(),
            "0.1".as_ref(),
            "--horizon".as_ref(),
            "0.2".as_ref(),
        ]);
        assert_eq!(code, 2);
    }
}
