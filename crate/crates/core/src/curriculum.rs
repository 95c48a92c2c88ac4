//! Task difficulty and easy-first pacing.
//!
//! A teacher classifier is trained per auxiliary task; the best validation
//! accuracy it reaches, `phi*`, gives the difficulty `delta = 1 - phi*`. Tasks
//! are ranked by ascending difficulty and the pacing schedule opens them to
//! the meta-learner in rank order.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Split, TaskDataset};
use crate::error::{Error, Result};
use crate::nets::{accuracy, train_classifier, LstmClassifierParams, NetConfig, TrainConfig};
use crate::seed;

/// Best validation accuracy of a freshly trained classifier, including the
/// untrained starting point.
pub fn teacher_score(task: &TaskDataset, net: &NetConfig, config: &TrainConfig) -> Result<f64> {
    let has = |s: Split| task.splits().contains(&s);
    if !has(Split::Valid) || !has(Split::Train) {
        return Err(Error::Contract(format!(
            "task `{}` needs train and valid splits for the teacher",
            task.condition_id()
        )));
    }
    let train = task.subset(Split::Train)?;
    let valid = task.subset(Split::Valid)?;
    let classes = task.class_set().last().map_or(0, |&c| c + 1);
    let mut model = LstmClassifierParams::init(&net.arch(task.window_len(), classes), config.seed)?;
    let mut best = accuracy(&model, valid.samples())?;
    train_classifier(&mut model, train.samples(), config, |_, m| {
        best = best.max(accuracy(m, valid.samples())?);
        Ok(())
    })?;
    Ok(best)
}

pub fn task_difficulty(phi_star: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi_star) {
        return Err(Error::Contract(format!("score {phi_star} outside [0, 1]")));
    }
    Ok(1.0 - phi_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyEntry {
    pub phi_star: f64,
    pub delta: f64,
    pub rank: usize,
}

/// Difficulty of every auxiliary condition, ranked easiest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DifficultyTable {
    entries: BTreeMap<String, DifficultyEntry>,
}

impl DifficultyTable {
    /// Ranks by ascending difficulty; ties go to the smaller condition id.
    pub fn from_scores(scores: &BTreeMap<String, f64>) -> Result<Self> {
        let mut rows: Vec<(&String, f64, f64)> = Vec::with_capacity(scores.len());
        for (id, &phi) in scores {
            rows.push((id, phi, task_difficulty(phi)?));
        }
        rows.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(b.0)));
        let entries = rows
            .into_iter()
            .enumerate()
            .map(|(rank, (id, phi_star, delta))| {
                (
                    id.clone(),
                    DifficultyEntry {
                        phi_star,
                        delta,
                        rank,
                    },
                )
            })
            .collect();
        Ok(DifficultyTable { entries })
    }

    /// Every condition equally easy: ranks follow condition id order.
    pub fn flat<'a>(conditions: impl IntoIterator<Item = &'a str>) -> Self {
        let scores = conditions.into_iter().map(|c| (c.to_string(), 1.0)).collect();
        Self::from_scores(&scores).expect("constant scores are valid")
    }

    pub fn get(&self, condition_id: &str) -> Option<&DifficultyEntry> {
        self.entries.get(condition_id)
    }

    pub fn rank(&self, condition_id: &str) -> Result<usize> {
        self.get(condition_id).map(|e| e.rank).ok_or_else(|| {
            Error::Contract(format!("no difficulty for condition `{condition_id}`"))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Condition ids in rank order.
    pub fn ordered(&self) -> Vec<&str> {
        let mut v: Vec<(&str, usize)> = self.entries.iter().map(|(k, e)| (k.as_str(), e.rank)).collect();
        v.sort_by_key(|&(_, r)| r);
        v.into_iter().map(|(k, _)| k).collect()
    }

    pub fn entries(&self) -> &BTreeMap<String, DifficultyEntry> {
        &self.entries
    }
}

/// Trains one teacher per task; each gets its own seed stream.
pub fn build_difficulty_table(
    tasks: &[TaskDataset],
    net: &NetConfig,
    config: &TrainConfig,
) -> Result<DifficultyTable> {
    let mut scores = BTreeMap::new();
    for task in tasks {
        let cfg = TrainConfig {
            seed: seed::derive(config.seed, task.condition_id()),
            ..config.clone()
        };
        scores.insert(task.condition_id().to_string(), teacher_score(task, net, &cfg)?);
    }
    DifficultyTable::from_scores(&scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacingState {
    pub step: usize,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub f0: f64,
}

/// Number of lowest-ranked tasks open at the current step:
/// `max(1, ceil(A * min(1, f0 + (1 - f0) * step / warmup)))`.
pub fn pacing_available(state: &PacingState, task_count: usize) -> Result<usize> {
    if task_count == 0 {
        return Err(Error::Contract("pacing over zero tasks".into()));
    }
    if !(state.f0 > 0.0 && state.f0 <= 1.0) {
        return Err(Error::Contract(format!("f0 {} outside (0, 1]", state.f0)));
    }
    // no warmup means no pacing, step 0 included
    let fraction = if state.warmup_steps == 0 {
        1.0
    } else {
        (state.f0 + (1.0 - state.f0) * state.step as f64 / state.warmup_steps as f64).min(1.0)
    };
    // the epsilon keeps 3 * (1/3) from rounding up to 2
    let m = (task_count as f64 * fraction - 1e-9).ceil() as usize;
    Ok(m.clamp(1, task_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Uniform,
    HardBiased,
}

/// Draws `batch_size` condition ids with replacement from `eligible`.
///
/// `HardBiased` weights each task by its latest query loss. Tasks with no
/// recorded loss take the largest recorded loss; with nothing recorded (or
/// all losses zero) the draw is uniform.
pub fn sample_task_batch(
    eligible: &[&str],
    batch_size: usize,
    mode: SamplingMode,
    recent_losses: &BTreeMap<String, f64>,
    rng_seed: u64,
) -> Result<Vec<String>> {
    if batch_size == 0 {
        return Err(Error::Contract("batch_size must be positive".into()));
    }
    if eligible.is_empty() {
        return Err(Error::Contract("no eligible tasks".into()));
    }
    let mut rng = seed::rng(rng_seed);
    let weights: Option<Vec<f64>> = match mode {
        SamplingMode::Uniform => None,
        SamplingMode::HardBiased => {
            let known: Vec<f64> = eligible
                .iter()
                .filter_map(|id| recent_losses.get(*id).copied())
                .collect();
            let fill = known.iter().copied().fold(0.0, f64::max);
            let w: Vec<f64> = eligible
                .iter()
                .map(|id| recent_losses.get(*id).copied().unwrap_or(fill).max(0.0))
                .collect();
            (w.iter().sum::<f64>() > 0.0).then_some(w)
        }
    };
    let picks: Vec<usize> = match weights {
        None => (0..batch_size).map(|_| rng.gen_range(0..eligible.len())).collect(),
        Some(w) => {
            let dist = WeightedIndex::new(&w).map_err(|e| Error::Contract(e.to_string()))?;
            (0..batch_size).map(|_| dist.sample(&mut rng)).collect()
        }
    };
    Ok(picks.into_iter().map(|i| eligible[i].to_string()).collect())
}

/// Checks the easy-first property on a trace of sampled batches: the step at
/// which each task first appears never decreases with its rank.
pub fn first_appearance_monotone(trace: &[Vec<String>], difficulty: &DifficultyTable) -> Result<bool> {
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for (step, batch) in trace.iter().enumerate() {
        for id in batch {
            first.entry(difficulty.rank(id)?).or_insert(step);
        }
    }
    let steps: Vec<usize> = first.values().copied().collect();
    Ok(steps.windows(2).all(|w| w[0] <= w[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::data::{generate_synthetic_task, Sample, SyntheticTaskSpec};

    fn pace(step: usize, warmup: usize, f0: f64, a: usize) -> usize {
        pacing_available(
            &PacingState {
                step,
                warmup_steps: warmup,
                total_steps: 100,
                f0,
            },
            a,
        )
        .unwrap()
    }

    #[test]
    fn pacing_formula() {
        assert_eq!(pace(0, 50, 0.25, 4), 1);
        assert_eq!(pace(50, 50, 0.25, 4), 4);
        assert_eq!(pace(80, 50, 0.25, 4), 4);
        // 0.25 + 0.75 * 0.5 = 0.625 -> ceil(2.5) = 3
        assert_eq!(pace(25, 50, 0.25, 4), 3);
        for s in 0..60 {
            assert_eq!(pace(s, 50, 0.25, 1), 1);
        }
        assert_eq!(pace(0, 10, 1.0 / 3.0, 3), 1);
    }

    #[test]
    fn zero_warmup_is_fully_open() {
        assert_eq!(pace(3, 0, 0.25, 5), 5);
        assert_eq!(pace(0, 0, 0.25, 5), 5);
    }

    #[test]
    fn difficulty_values() {
        assert_eq!(task_difficulty(1.0).unwrap(), 0.0);
        assert!((task_difficulty(0.95).unwrap() - 0.05).abs() < 1e-12);
        assert!(task_difficulty(1.5).is_err());
        assert!(task_difficulty(-0.1).is_err());
    }

    #[test]
    fn ranks_ascend_with_difficulty_ties_by_id() {
        let scores: BTreeMap<String, f64> = [("a", 0.9), ("b", 0.6), ("c", 0.9), ("d", 1.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let t = DifficultyTable::from_scores(&scores).unwrap();
        assert_eq!(t.ordered(), vec!["d", "a", "c", "b"]);
        assert!(t.rank("a").unwrap() < t.rank("b").unwrap());
        let mut ranks: Vec<usize> = t.entries().values().map(|e| e.rank).collect();
        ranks.sort();
        assert_eq!(ranks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn shifting_scores_keeps_ranks() {
        let base: BTreeMap<String, f64> = [("a", 0.5), ("b", 0.7), ("c", 0.2)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let shifted = base
            .iter()
            .map(|(k, v)| (k.clone(), (v + 0.2f64).clamp(0.0, 1.0)))
            .collect();
        assert_eq!(
            DifficultyTable::from_scores(&base).unwrap().ordered(),
            DifficultyTable::from_scores(&shifted).unwrap().ordered()
        );
    }

    #[test]
    fn single_eligible_task_repeats() {
        let b = sample_task_batch(&["x"], 5, SamplingMode::Uniform, &BTreeMap::new(), 1).unwrap();
        assert_eq!(b, vec!["x"; 5]);
    }

    #[test]
    fn hard_biased_follows_losses() {
        let losses: BTreeMap<String, f64> = [("a", 0.0), ("b", 0.0), ("c", 9.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let b = sample_task_batch(&["a", "b", "c"], 50, SamplingMode::HardBiased, &losses, 3).unwrap();
        assert!(b.iter().all(|x| x == "c"));
    }

    #[test]
    fn hard_biased_without_losses_is_uniform_over_all() {
        let b = sample_task_batch(&["a", "b"], 200, SamplingMode::HardBiased, &BTreeMap::new(), 3)
            .unwrap();
        assert!(b.iter().any(|x| x == "a") && b.iter().any(|x| x == "b"));
    }

    #[test]
    fn batch_is_deterministic_and_rejects_zero() {
        let e = ["a", "b", "c"];
        let m = BTreeMap::new();
        assert_eq!(
            sample_task_batch(&e, 8, SamplingMode::Uniform, &m, 42).unwrap(),
            sample_task_batch(&e, 8, SamplingMode::Uniform, &m, 42).unwrap()
        );
        assert!(sample_task_batch(&e, 0, SamplingMode::Uniform, &m, 42).is_err());
    }

    #[test]
    fn first_appearance_check() {
        let t = DifficultyTable::flat(["a", "b", "c"]);
        let ok = vec![vec!["a".to_string()], vec!["a".into(), "b".into()], vec!["c".into()]];
        assert!(first_appearance_monotone(&ok, &t).unwrap());
        let bad = vec![vec!["b".to_string()], vec!["a".into()]];
        assert!(!first_appearance_monotone(&bad, &t).unwrap());
    }

    fn small_net() -> NetConfig {
        NetConfig {
            timesteps: 8,
            hidden_size: 8,
            layers: 1,
        }
    }

    #[test]
    fn teacher_without_valid_split_is_contract_error() {
        let samples = (0..10)
            .map(|i| Sample {
                window: vec![i as f64; 16],
                label: i % 2,
            })
            .collect();
        let t = TaskDataset::new("t", 16, samples).unwrap();
        assert!(matches!(
            teacher_score(&t, &small_net(), &TrainConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn teacher_zero_epochs_scores_initial_net() {
        let spec = SyntheticTaskSpec {
            condition_id: "t".into(),
            n_classes: 2,
            samples_per_class: 20,
            window_len: 32,
            stride: None,
            base_freq: 0.05,
            impulse_rate_per_class: vec![1.0, 4.0],
            impulse_amplitude_per_class: vec![],
            noise_std: 0.1,
            condition_shift: 0.0,
            period_jitter: 0.1,
        };
        let mut t = generate_synthetic_task(&spec, 0).unwrap();
        t.split_train_valid(0.9).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        let phi = teacher_score(&t, &small_net(), &cfg).unwrap();
        let classes = 2;
        let net = LstmClassifierParams::init(&small_net().arch(32, classes), 5).unwrap();
        let valid = t.subset(Split::Valid).unwrap();
        assert_eq!(phi, accuracy(&net, valid.samples()).unwrap());
    }

    proptest! {
        #[test]
        fn pacing_is_monotone_and_bounded(
            warmup in 0usize..50,
            f0 in 0.01f64..1.0,
            a in 1usize..8,
            step in 0usize..100,
        ) {
            let now = pace(step, warmup, f0, a);
            prop_assert!((1..=a).contains(&now));
            prop_assert!(pace(step + 1, warmup, f0, a) >= now);
            prop_assert_eq!(pace(warmup, warmup, f0, a), a);
        }
    }
}
