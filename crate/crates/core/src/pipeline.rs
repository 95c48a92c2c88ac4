//! End-to-end runs: data, relevance, difficulty, meta-training, fine-tuning
//! and evaluation, with every artifact written under one output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::curriculum::{build_difficulty_table, DifficultyTable};
use crate::data::{
    generate_synthetic_task, load_manifest, synthetic_records, write_signal, Manifest,
    ManifestEntry, Sample, Split, SyntheticTaskSpec, TaskDataset,
};
use crate::error::{Error, Result};
use crate::finetune::{fine_tune, freeze_layers, predict_all, FrozenModel, Prediction};
use crate::metatrain::{meta_train_with, CurriculumConfig, MetaConfig, StepRecord};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::nets::{LstmClassifierParams, NetConfig, TrainConfig};
use crate::relevance::{build_relevance_table, AutoencoderConfig, RelevanceTable};
use crate::seed;

/// Which initialisation the target model starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Relevance-scaled, curriculum-paced meta-training.
    #[default]
    RtAcm,
    /// Meta-training with unit relevance and no curriculum.
    Maml,
    /// No meta-training; the target model starts from a random init.
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Manifest(PathBuf),
    Synthetic(SyntheticSuite),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSuite::default())
    }
}

/// A generated set of working conditions. The condition named `target` is
/// the target task; the rest are auxiliary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSuite {
    pub target: String,
    pub conditions: Vec<SyntheticTaskSpec>,
}

impl SyntheticSuite {
    /// Three auxiliary conditions around a target: two close to it, one far
    /// off and noisy.
    pub fn standard(window_len: usize, samples_per_class: usize) -> Self {
        let cond = |id: &str, shift: f64, noise: f64, amps: Vec<f64>| SyntheticTaskSpec {
            condition_id: id.into(),
            n_classes: 3,
            samples_per_class,
            window_len,
            stride: None,
            base_freq: 0.02,
            impulse_rate_per_class: vec![1.5, 4.0, 9.0],
            impulse_amplitude_per_class: amps,
            noise_std: noise,
            condition_shift: shift,
            period_jitter: 0.1,
        };
        SyntheticSuite {
            target: "target".into(),
            conditions: vec![
                cond("aux_a", 0.05, 0.06, vec![3.0, 3.0, 3.0]),
                cond("aux_b", 0.15, 0.135, vec![3.0, 2.5, 2.5]),
                cond("aux_far", 2.5, 0.27, vec![2.0, 2.0, 2.0]),
                cond("target", 0.0, 0.09, vec![3.0, 3.0, 3.0]),
            ],
        }
    }
}

impl Default for SyntheticSuite {
    fn default() -> Self {
        SyntheticSuite::standard(128, 120)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub frozen_layers: usize,
    pub new_layers: usize,
    pub train: TrainConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            frozen_layers: 3,
            new_layers: 1,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSource,
    /// Overrides the target condition named by the data source.
    pub target: Option<String>,
    /// Train/valid/test ratios for the target when the source has none.
    pub target_ratios: (f64, f64, f64),
    /// Train share of each auxiliary pool when scoring its teacher.
    pub teacher_train_ratio: f64,
    pub method: Method,
    pub net: NetConfig,
    pub relevance: AutoencoderConfig,
    pub renormalize_relevance: bool,
    pub teacher: TrainConfig,
    pub meta: MetaConfig,
    pub finetune: FinetuneConfig,
    /// Save `theta` every this many meta-steps; 0 disables.
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::default(),
            target: None,
            target_ratios: (0.8, 0.1, 0.1),
            teacher_train_ratio: 0.9,
            method: Method::RtAcm,
            net: NetConfig::default(),
            relevance: AutoencoderConfig::default(),
            renormalize_relevance: false,
            teacher: TrainConfig::default(),
            meta: MetaConfig::default(),
            finetune: FinetuneConfig::default(),
            checkpoint_every: 0,
            out_dir: PathBuf::from("rtacm-out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// A configuration sized to finish in seconds on one core.
    pub fn quick() -> Self {
        RunConfig {
            data: DataSource::Synthetic(SyntheticSuite::standard(64, 100)),
            // few-shot needs only k_shot windows per class; the rest scores
            target_ratios: (0.3, 0.1, 0.6),
            net: NetConfig {
                timesteps: 4,
                hidden_size: 32,
                layers: 4,
            },
            relevance: AutoencoderConfig {
                hidden: vec![32],
                latent_dim: 8,
                epochs: 150,
                lr: 3e-3,
                ..AutoencoderConfig::default()
            },
            teacher: TrainConfig {
                epochs: 15,
                lr: 1e-2,
                ..TrainConfig::default()
            },
            meta: MetaConfig {
                alpha: 0.1,
                beta: Some(2.0),
                total_steps: 800,
                ..MetaConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the configuration without touching any data.
    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Manifest(p) if !p.is_file() => {
                return Err(Error::Config(format!("manifest `{}` not found", p.display())));
            }
            DataSource::Synthetic(s) => {
                if s.conditions.len() < 2 {
                    return Err(Error::Config("synthetic suite needs a target and an auxiliary condition".into()));
                }
                for c in &s.conditions {
                    c.validate()?;
                }
            }
            _ => {}
        }
        self.meta.validate()?;
        if self.finetune.frozen_layers == 0 || self.finetune.frozen_layers > self.net.layers {
            return Err(Error::Config(format!(
                "frozen_layers {} outside 1..={}",
                self.finetune.frozen_layers, self.net.layers
            )));
        }
        if !(self.teacher_train_ratio > 0.0 && self.teacher_train_ratio < 1.0) {
            return Err(Error::Config("teacher_train_ratio must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Replaces every stage seed by one derived from the global seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.relevance.seed = seed::derive(self.seed, "relevance");
        c.teacher.seed = seed::derive(self.seed, "difficulty");
        c.meta.seed = seed::derive(self.seed, "meta-train");
        c.finetune.train.seed = seed::derive(self.seed, "fine-tune");
        c
    }

    fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive(self.seed, stage)
    }
}

/// Auxiliary pools plus the prepared target.
#[derive(Debug, Clone)]
pub struct Tasks {
    pub auxiliary: Vec<TaskDataset>,
    /// Target restricted to `n_way` classes, with its train/valid/test split.
    pub target: TaskDataset,
    /// `k_shot` windows per class from the target's train split.
    pub target_train: TaskDataset,
    pub target_test: TaskDataset,
}

pub fn load_tasks(config: &RunConfig) -> Result<Tasks> {
    let (mut tasks, named_target, split_done) = match &config.data {
        DataSource::Manifest(path) => {
            let m = load_manifest(path)?;
            (m.tasks, m.target_condition, true)
        }
        DataSource::Synthetic(suite) => {
            let mut tasks = Vec::new();
            for (i, spec) in suite.conditions.iter().enumerate() {
                let s = seed::derive_indexed(config.stage_seed("synth"), &spec.condition_id, i as u64);
                tasks.push(generate_synthetic_task(spec, s)?);
            }
            (tasks, suite.target.clone(), false)
        }
    };
    let target_id = config.target.clone().unwrap_or(named_target);
    let pos = tasks
        .iter()
        .position(|t| t.condition_id() == target_id)
        .ok_or_else(|| Error::Config(format!("target condition `{target_id}` not in the data")))?;
    let raw_target = tasks.remove(pos);

    let n_way = config.meta.n_way;
    let classes: Vec<usize> = raw_target.class_set().into_iter().take(n_way).collect();
    if classes.len() < n_way {
        return Err(Error::Data(format!(
            "target `{target_id}` has {} classes, {n_way}-way needs more",
            classes.len()
        )));
    }
    let mut target = raw_target.restrict_classes(&classes)?;
    if !split_done || config.target.is_some() {
        target.split_per_class(config.target_ratios)?;
    }
    let train_pool = target.subset(Split::Train)?;
    let target_test = target.subset(Split::Test)?;

    let mut rng = seed::rng(config.stage_seed("few-shot"));
    let mut shots = Vec::new();
    for label in 0..n_way {
        let idx = train_pool.class_indices(label);
        if idx.len() < config.meta.k_shot {
            return Err(Error::Data(format!(
                "target class {label} has {} training windows, {} needed",
                idx.len(),
                config.meta.k_shot
            )));
        }
        let mut pick: Vec<usize> = idx.choose_multiple(&mut rng, config.meta.k_shot).copied().collect();
        pick.sort_unstable();
        shots.extend(pick.into_iter().map(|i| train_pool.samples()[i].clone()));
    }
    let target_train = TaskDataset::new(format!("{target_id}:few-shot"), target.window_len(), shots)?;
    Ok(Tasks {
        auxiliary: tasks,
        target,
        target_train,
        target_test,
    })
}

/// What one complete run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub relevance: RelevanceTable,
    pub difficulty: DifficultyTable,
    pub history: Vec<StepRecord>,
    pub theta: LstmClassifierParams,
    pub model: FrozenModel,
    pub finetune_curve: Vec<f64>,
    pub predictions: Vec<Prediction>,
    pub metrics: MetricsReport,
}

pub fn compute_relevance(config: &RunConfig, tasks: &Tasks) -> Result<RelevanceTable> {
    let ids = tasks.auxiliary.iter().map(|t| t.condition_id());
    if config.method != Method::RtAcm {
        return Ok(RelevanceTable::uniform(ids));
    }
    let table = build_relevance_table(&tasks.auxiliary, &tasks.target_train, &config.relevance)?;
    Ok(if config.renormalize_relevance {
        table.renormalized()
    } else {
        table
    })
}

pub fn compute_difficulty(config: &RunConfig, tasks: &Tasks) -> Result<DifficultyTable> {
    let ids = tasks.auxiliary.iter().map(|t| t.condition_id());
    if config.method != Method::RtAcm {
        return Ok(DifficultyTable::flat(ids));
    }
    let mut split = tasks.auxiliary.clone();
    for t in &mut split {
        t.split_train_valid(config.teacher_train_ratio)?;
    }
    build_difficulty_table(&split, &config.net, &config.teacher)
}

/// The meta-learner's head spans every auxiliary class; episodes mask the
/// columns they do not use.
fn initial_theta(config: &RunConfig, tasks: &Tasks) -> Result<LstmClassifierParams> {
    let classes = tasks
        .auxiliary
        .iter()
        .filter_map(|t| t.class_set().last().copied())
        .max()
        .map_or(config.meta.n_way, |c| (c + 1).max(config.meta.n_way));
    let arch = config.net.arch(tasks.target.window_len(), classes);
    LstmClassifierParams::init(&arch, config.stage_seed("meta-init"))
}

/// Meta-trains from the seeded initialisation (or returns it untouched for
/// [`Method::Scratch`]).
pub fn run_meta_training(
    config: &RunConfig,
    tasks: &Tasks,
    relevance: &RelevanceTable,
    difficulty: &DifficultyTable,
    on_step: impl FnMut(&crate::metatrain::MetaState<LstmClassifierParams>) -> Result<()>,
) -> Result<(LstmClassifierParams, Vec<StepRecord>)> {
    let theta = initial_theta(config, tasks)?;
    if config.method == Method::Scratch {
        return Ok((theta, Vec::new()));
    }
    let mut meta = config.meta.clone();
    if config.method == Method::Maml {
        meta.curriculum = CurriculumConfig::disabled();
    }
    let state = meta_train_with(&tasks.auxiliary, relevance, difficulty, &meta, theta, on_step)?;
    Ok((state.theta, state.history))
}

pub fn run_fine_tune(
    config: &RunConfig,
    tasks: &Tasks,
    theta: &LstmClassifierParams,
) -> Result<(FrozenModel, Vec<f64>)> {
    let ft = &config.finetune;
    let mut model = freeze_layers(
        theta,
        ft.frozen_layers,
        ft.new_layers,
        config.meta.n_way,
        config.stage_seed("fine-tune-init"),
    )?;
    let curve = fine_tune(&mut model, tasks.target_train.samples(), &ft.train)?;
    Ok((model, curve))
}

pub fn evaluate(config: &RunConfig, model: &FrozenModel, test: &[Sample]) -> Result<(Vec<Prediction>, MetricsReport)> {
    let predictions = predict_all(model, test)?;
    let pairs: Vec<(usize, usize)> = predictions.iter().map(|p| (p.truth, p.predicted)).collect();
    let metrics = compute_metrics(&pairs, config.meta.n_way)?;
    Ok((predictions, metrics))
}

/// Runs every stage in memory without writing anything.
pub fn run_in_memory(config: &RunConfig) -> Result<RunOutcome> {
    let config = &config.resolved();
    config.validate()?;
    let tasks = load_tasks(config).map_err(|e| e.in_stage("ingest"))?;
    run_stages(config, &tasks, |_| Ok(()))
}

fn run_stages(
    config: &RunConfig,
    tasks: &Tasks,
    on_step: impl FnMut(&crate::metatrain::MetaState<LstmClassifierParams>) -> Result<()>,
) -> Result<RunOutcome> {
    let relevance = compute_relevance(config, tasks).map_err(|e| e.in_stage("relevance"))?;
    let difficulty = compute_difficulty(config, tasks).map_err(|e| e.in_stage("difficulty"))?;
    let (theta, history) = run_meta_training(config, tasks, &relevance, &difficulty, on_step)
        .map_err(|e| e.in_stage("meta-train"))?;
    let (model, finetune_curve) =
        run_fine_tune(config, tasks, &theta).map_err(|e| e.in_stage("fine-tune"))?;
    let (predictions, metrics) =
        evaluate(config, &model, tasks.target_test.samples()).map_err(|e| e.in_stage("evaluate"))?;
    Ok(RunOutcome {
        relevance,
        difficulty,
        history,
        theta,
        model,
        finetune_curve,
        predictions,
        metrics,
    })
}

/// Exclusive claim on an output directory, released on drop.
pub struct OutputDir {
    root: PathBuf,
    lock: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn claim(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let lock = root.join(".rtacm.lock");
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::Config(format!(
                        "`{}` is locked by another run (remove {} if stale)",
                        root.display(),
                        lock.display()
                    ))
                } else {
                    Error::io(&lock, e)
                }
            })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            lock,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn write_params(&mut self, name: &str, params: &crate::autodiff::ModelParams) -> Result<()> {
        self.write(name, checkpoint::encode(params))
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

pub const THETA_CKPT: &str = "checkpoints/theta.ckpt";
pub const FINETUNED_CKPT: &str = "checkpoints/finetuned.ckpt";

pub fn train_log_csv(history: &[StepRecord]) -> String {
    let mut out = String::from("step,mode,loss,accuracy,tasks,query_losses\n");
    for r in history {
        let losses: Vec<String> = r.query_losses.iter().map(|l| l.to_string()).collect();
        let mode = match r.mode {
            crate::curriculum::SamplingMode::Uniform => "uniform",
            crate::curriculum::SamplingMode::HardBiased => "hard_biased",
        };
        let _ = writeln!(
            out,
            "{},{mode},{},{},{},{}",
            r.step,
            r.loss,
            r.accuracy,
            r.tasks.join(";"),
            losses.join(";")
        );
    }
    out
}

pub fn curriculum_trace_csv(history: &[StepRecord]) -> String {
    let mut out = String::from("step,tasks\n");
    for r in history {
        let _ = writeln!(out, "{},{}", r.step, r.tasks.join(";"));
    }
    out
}

pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from("index,true,predicted,max_prob\n");
    for p in predictions {
        let _ = writeln!(out, "{},{},{},{}", p.index, p.truth, p.predicted, p.max_prob);
    }
    out
}

pub fn embeddings_csv(predictions: &[Prediction]) -> String {
    let width = predictions.first().map_or(0, |p| p.hidden.len());
    let mut out = String::from("index,label");
    for k in 0..width {
        let _ = write!(out, ",h{k}");
    }
    out.push('\n');
    for p in predictions {
        let _ = write!(out, "{},{}", p.index, p.truth);
        for v in &p.hidden {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn finetune_log_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{e},{l}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub target: String,
    pub accuracy: f64,
    pub artifacts: Vec<String>,
}

/// Runs every stage and writes all artifacts into `config.out_dir`.
pub fn run_all(config: &RunConfig) -> Result<RunOutcome> {
    let config = config.resolved();
    config.validate()?;
    let mut out = OutputDir::claim(&config.out_dir)?;
    out.write_json("resolved_config.json", &config)?;
    let tasks = load_tasks(&config).map_err(|e| e.in_stage("ingest"))?;
    out.write_json("data_summary.json", &DataSummary::of(&tasks))?;

    let relevance = compute_relevance(&config, &tasks).map_err(|e| e.in_stage("relevance"))?;
    out.write_json("relevance.json", &relevance)?;
    let difficulty = compute_difficulty(&config, &tasks).map_err(|e| e.in_stage("difficulty"))?;
    out.write_json("difficulty.json", &difficulty)?;

    let (theta, history) = meta_stage(&config, &tasks, &relevance, &difficulty, &mut out)?;
    let outcome = finish_stages(&config, &tasks, relevance, difficulty, theta, history, &mut out)?;
    Ok(outcome)
}

fn meta_stage(
    config: &RunConfig,
    tasks: &Tasks,
    relevance: &RelevanceTable,
    difficulty: &DifficultyTable,
    out: &mut OutputDir,
) -> Result<(LstmClassifierParams, Vec<StepRecord>)> {
    let every = config.checkpoint_every;
    let mut saved: Vec<(String, Vec<u8>)> = Vec::new();
    let (theta, history) = run_meta_training(config, tasks, relevance, difficulty, |state| {
        if every > 0 && state.step % every == 0 {
            saved.push((
                format!("checkpoints/theta_step{:05}.ckpt", state.step),
                checkpoint::encode(state.theta.params()),
            ));
        }
        Ok(())
    })
    .map_err(|e| e.in_stage("meta-train"))?;
    for (name, bytes) in saved {
        out.write(&name, bytes)?;
    }
    out.write_params(THETA_CKPT, theta.params())?;
    out.write("train_log.csv", train_log_csv(&history))?;
    out.write("curriculum_trace.csv", curriculum_trace_csv(&history))?;
    Ok((theta, history))
}

fn finish_stages(
    config: &RunConfig,
    tasks: &Tasks,
    relevance: RelevanceTable,
    difficulty: DifficultyTable,
    theta: LstmClassifierParams,
    history: Vec<StepRecord>,
    out: &mut OutputDir,
) -> Result<RunOutcome> {
    let (model, finetune_curve) =
        run_fine_tune(config, tasks, &theta).map_err(|e| e.in_stage("fine-tune"))?;
    out.write_params(FINETUNED_CKPT, model.net().params())?;
    out.write("finetune_log.csv", finetune_log_csv(&finetune_curve))?;

    let (predictions, metrics) =
        evaluate(config, &model, tasks.target_test.samples()).map_err(|e| e.in_stage("evaluate"))?;
    write_evaluation(out, &predictions, &metrics)?;
    let mut artifacts = out.written().to_vec();
    artifacts.push("run_summary.json".into());
    out.write_json(
        "run_summary.json",
        &RunSummary {
            method: config.method,
            target: tasks.target.condition_id().to_string(),
            accuracy: metrics.accuracy,
            artifacts,
        },
    )?;
    Ok(RunOutcome {
        relevance,
        difficulty,
        history,
        theta,
        model,
        finetune_curve,
        predictions,
        metrics,
    })
}

fn write_evaluation(out: &mut OutputDir, predictions: &[Prediction], metrics: &MetricsReport) -> Result<()> {
    out.write_json("metrics.json", metrics)?;
    out.write("confusion.csv", metrics.confusion_csv())?;
    out.write("predictions.csv", predictions_csv(predictions))?;
    out.write("embeddings.csv", embeddings_csv(predictions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub condition_id: String,
    pub windows: usize,
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub target: TaskSummary,
    pub target_train: usize,
    pub target_test: usize,
    pub auxiliary: Vec<TaskSummary>,
}

impl DataSummary {
    pub fn of(tasks: &Tasks) -> Self {
        let sum = |t: &TaskDataset| TaskSummary {
            condition_id: t.condition_id().to_string(),
            windows: t.len(),
            classes: t.class_set().into_iter().collect(),
        };
        DataSummary {
            target: sum(&tasks.target),
            target_train: tasks.target_train.len(),
            target_test: tasks.target_test.len(),
            auxiliary: tasks.auxiliary.iter().map(sum).collect(),
        }
    }
}

/// The individually runnable stages. Each reuses artifacts of earlier
/// stages found in the output directory and computes them otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Relevance,
    Difficulty,
    MetaTrain,
    FineTune,
    Evaluate,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

pub fn run_stage(config: &RunConfig, stage: Stage) -> Result<()> {
    let config = config.resolved();
    config.validate()?;
    let mut out = OutputDir::claim(&config.out_dir)?;
    out.write_json("resolved_config.json", &config)?;
    let tasks = load_tasks(&config).map_err(|e| e.in_stage("ingest"))?;
    if stage == Stage::Ingest {
        return out.write_json("data_summary.json", &DataSummary::of(&tasks));
    }

    let relevance = match read_json(&out.path("relevance.json"))? {
        Some(r) if stage != Stage::Relevance => r,
        _ => {
            let r = compute_relevance(&config, &tasks).map_err(|e| e.in_stage("relevance"))?;
            out.write_json("relevance.json", &r)?;
            r
        }
    };
    if stage == Stage::Relevance {
        return Ok(());
    }
    let difficulty = match read_json(&out.path("difficulty.json"))? {
        Some(d) if stage != Stage::Difficulty => d,
        _ => {
            let d = compute_difficulty(&config, &tasks).map_err(|e| e.in_stage("difficulty"))?;
            out.write_json("difficulty.json", &d)?;
            d
        }
    };
    if stage == Stage::Difficulty {
        return Ok(());
    }
    let timesteps = config.net.timesteps;
    let theta_path = out.path(THETA_CKPT);
    let theta = if stage != Stage::MetaTrain && theta_path.is_file() {
        LstmClassifierParams::from_params(checkpoint::load(&theta_path)?, timesteps)?
    } else {
        meta_stage(&config, &tasks, &relevance, &difficulty, &mut out)?.0
    };
    if stage == Stage::MetaTrain {
        return Ok(());
    }
    let ft_path = out.path(FINETUNED_CKPT);
    let net = if stage != Stage::FineTune && ft_path.is_file() {
        LstmClassifierParams::from_params(checkpoint::load(&ft_path)?, timesteps)?
    } else {
        let (model, curve) = run_fine_tune(&config, &tasks, &theta).map_err(|e| e.in_stage("fine-tune"))?;
        out.write_params(FINETUNED_CKPT, model.net().params())?;
        out.write("finetune_log.csv", finetune_log_csv(&curve))?;
        model.net().clone()
    };
    if stage == Stage::FineTune {
        return Ok(());
    }
    // a restored network is wrapped back up with every layer treated as frozen
    let model = freeze_restored(net, &config)?;
    let (predictions, metrics) =
        evaluate(&config, &model, tasks.target_test.samples()).map_err(|e| e.in_stage("evaluate"))?;
    write_evaluation(&mut out, &predictions, &metrics)
}

fn freeze_restored(net: LstmClassifierParams, config: &RunConfig) -> Result<FrozenModel> {
    FrozenModel::restore(net, config.finetune.frozen_layers, config.finetune.new_layers)
}

/// Axis of a sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Inner steps 1..=5; each value is meta-trained separately.
    LocalSteps,
    /// Frozen layers 1..=L over one shared meta-trained `theta`.
    FrozenLayers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub accuracy: f64,
}

pub fn sweep_values(config: &RunConfig, axis: SweepAxis) -> Vec<usize> {
    match axis {
        SweepAxis::LocalSteps => (1..=5).collect(),
        SweepAxis::FrozenLayers => (1..=config.net.layers).collect(),
    }
}

/// Sweep without writing files.
pub fn sweep_in_memory(config: &RunConfig, axis: SweepAxis) -> Result<Vec<SweepRow>> {
    let config = config.resolved();
    config.validate()?;
    let tasks = load_tasks(&config).map_err(|e| e.in_stage("ingest"))?;
    let relevance = compute_relevance(&config, &tasks).map_err(|e| e.in_stage("relevance"))?;
    let difficulty = compute_difficulty(&config, &tasks).map_err(|e| e.in_stage("difficulty"))?;
    let mut rows = Vec::new();
    let mut shared: Option<LstmClassifierParams> = None;
    for value in sweep_values(&config, axis) {
        let mut c = config.clone();
        match axis {
            SweepAxis::LocalSteps => c.meta.local_steps = value,
            SweepAxis::FrozenLayers => c.finetune.frozen_layers = value,
        }
        let theta = match (&shared, axis) {
            (Some(t), SweepAxis::FrozenLayers) => t.clone(),
            _ => {
                let t = run_meta_training(&c, &tasks, &relevance, &difficulty, |_| Ok(()))
                    .map_err(|e| e.in_stage("meta-train"))?
                    .0;
                shared = Some(t.clone());
                t
            }
        };
        let (model, _) = run_fine_tune(&c, &tasks, &theta).map_err(|e| e.in_stage("fine-tune"))?;
        let (_, metrics) =
            evaluate(&c, &model, tasks.target_test.samples()).map_err(|e| e.in_stage("evaluate"))?;
        rows.push(SweepRow {
            value,
            accuracy: metrics.accuracy,
        });
    }
    rows.sort_by_key(|r| r.value);
    Ok(rows)
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let name = match axis {
        SweepAxis::LocalSteps => "local_steps",
        SweepAxis::FrozenLayers => "frozen_layers",
    };
    let mut out = format!("{name},accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.value, r.accuracy);
    }
    out
}

/// Runs a sweep and writes `sweep_<axis>.csv`.
pub fn sweep(config: &RunConfig, axis: SweepAxis) -> Result<Vec<SweepRow>> {
    let resolved = config.resolved();
    resolved.validate()?;
    let mut out = OutputDir::claim(&resolved.out_dir)?;
    out.write_json("resolved_config.json", &resolved)?;
    let rows = sweep_in_memory(config, axis)?;
    let name = match axis {
        SweepAxis::LocalSteps => "sweep_local_steps.csv",
        SweepAxis::FrozenLayers => "sweep_frozen_layers.csv",
    };
    out.write(name, sweep_csv(axis, &rows))?;
    Ok(rows)
}

/// Writes the synthetic suite as per-class CSV signals plus a manifest that
/// [`load_manifest`] reads back.
pub fn write_synthetic_dataset(config: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let DataSource::Synthetic(suite) = &config.data else {
        return Err(Error::Config("`synth` needs a synthetic data source".into()));
    };
    let config = config.resolved();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut signals = Vec::new();
    for (i, spec) in suite.conditions.iter().enumerate() {
        spec.validate()?;
        let s = seed::derive_indexed(config.stage_seed("synth"), &spec.condition_id, i as u64);
        for rec in synthetic_records(spec, s)? {
            let file = format!("{}_class{}.csv", rec.condition_id, rec.label);
            write_signal(&dir.join(&file), &rec.series)?;
            signals.push(ManifestEntry {
                condition_id: rec.condition_id.clone(),
                label: rec.label,
                path: PathBuf::from(file),
                class_count: spec.n_classes,
                window_len: spec.window_len,
                stride: spec.stride(),
            });
        }
    }
    let manifest = Manifest {
        target_condition: suite.target.clone(),
        ratios: config.target_ratios,
        signals,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Target test accuracy of each initialisation on one seed.
pub fn compare_methods(config: &RunConfig) -> Result<BTreeMap<&'static str, f64>> {
    let mut out = BTreeMap::new();
    for (name, method) in [("rt_acm", Method::RtAcm), ("maml", Method::Maml), ("scratch", Method::Scratch)] {
        let c = RunConfig {
            method,
            ..config.clone()
        };
        out.insert(name, run_in_memory(&c)?.metrics.accuracy);
    }
    Ok(out)
}
