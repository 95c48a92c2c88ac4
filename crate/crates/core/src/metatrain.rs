//! Relevance-weighted, curriculum-paced MAML.
//!
//! Each meta-step samples a batch of auxiliary tasks from the tasks the
//! pacing schedule has opened, adapts a copy of `theta` on every task's
//! support set with the inner step scaled by that task's relevance, and then
//! moves `theta` against the summed query-set gradients of the adapted copies.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::ModelParams;
use crate::curriculum::{
    pacing_available, sample_task_batch, DifficultyTable, PacingState, SamplingMode,
};
use crate::data::{sample_episode, Sample, TaskDataset};
use crate::error::{Error, Result};
use crate::nets::LstmClassifierParams;
use crate::relevance::RelevanceTable;
use crate::seed;

/// Loss, gradient and hit count of a model on one batch.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub grads: ModelParams,
    pub correct: usize,
    pub count: usize,
}

/// Anything meta-training can adapt: a parameter set plus a differentiable
/// loss over some batch type.
pub trait Learner: Clone {
    type Batch: ?Sized;

    fn params(&self) -> &ModelParams;
    fn params_mut(&mut self) -> &mut ModelParams;
    fn evaluate(&self, batch: &Self::Batch) -> Result<Evaluation>;
}

impl Learner for LstmClassifierParams {
    type Batch = [Sample];

    fn params(&self) -> &ModelParams {
        LstmClassifierParams::params(self)
    }

    fn params_mut(&mut self) -> &mut ModelParams {
        LstmClassifierParams::params_mut(self)
    }

    /// Head columns of classes absent from the batch are masked out, so a
    /// head wider than the episode scores only the episode's classes.
    fn evaluate(&self, batch: &[Sample]) -> Result<Evaluation> {
        let (windows, labels): (Vec<&[f64]>, Vec<usize>) =
            batch.iter().map(|s| (s.window.as_slice(), s.label)).unzip();
        let present: BTreeSet<usize> = labels.iter().copied().collect();
        let allowed: Vec<usize> = present.into_iter().collect();
        let e = self.loss_and_grad_masked(&windows, &labels, &allowed)?;
        Ok(Evaluation {
            loss: e.loss,
            grads: e.grads,
            correct: e.correct,
            count: batch.len(),
        })
    }
}

/// Inner-loop adaptation: `local_steps` sequential steps of
/// `theta' = theta' - alpha * grad(gamma * L(theta', support))`.
/// `theta` itself is left untouched.
pub fn local_update<L: Learner>(
    theta: &L,
    support: &L::Batch,
    gamma: f64,
    alpha: f64,
    local_steps: usize,
) -> Result<L> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Contract(format!("relevance {gamma} outside (0, 1]")));
    }
    if local_steps == 0 {
        return Err(Error::Contract("local_steps must be at least 1".into()));
    }
    let mut adapted = theta.clone();
    for step in 0..local_steps {
        let eval = adapted.evaluate(support)?;
        if !eval.loss.is_finite() {
            return Err(Error::Training(format!("non-finite support loss at local step {step}")));
        }
        let mut g = eval.grads;
        // gamma is a constant factor of the loss, hence of its gradient
        if gamma != 1.0 {
            g.scale(gamma);
        }
        adapted
            .params_mut()
            .sgd_step(alpha, &g)
            .map_err(|e| Error::Training(format!("local step {step}: {e}")))?;
    }
    Ok(adapted)
}

/// One task's contribution to a global update.
pub struct AdaptedTask<'a, L: Learner> {
    pub adapted: L,
    pub support: &'a L::Batch,
    pub query: &'a L::Batch,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
}

/// Outer step `theta <- theta - beta * sum_m grad L(theta'_m, query_m)`.
///
/// First-order mode takes each gradient at the adapted parameters and applies
/// it to `theta` directly. Exact mode also pulls the gradient back through
/// the inner steps, `v <- v - alpha * gamma * H(theta_j) v`, with each
/// Hessian-vector product taken by central differences of the support
/// gradient.
pub fn global_update<L: Learner>(
    theta: &mut L,
    tasks: &[AdaptedTask<'_, L>],
    beta: f64,
    first_order: bool,
    alpha: f64,
    local_steps: usize,
) -> Result<Vec<QueryResult>> {
    if tasks.is_empty() {
        return Err(Error::Contract("global update over no tasks".into()));
    }
    let mut total: Option<ModelParams> = None;
    let mut results = Vec::with_capacity(tasks.len());
    for task in tasks {
        let eval = task.adapted.evaluate(task.query)?;
        let mut g = eval.grads;
        if !first_order {
            g = pull_back(theta, task, g, alpha, local_steps)?;
        }
        results.push(QueryResult {
            loss: eval.loss,
            correct: eval.correct,
            count: eval.count,
        });
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => t.axpy(1.0, &g)?,
        }
    }
    let aggregate: f64 = results.iter().map(|r| r.loss).sum();
    if !aggregate.is_finite() {
        return Err(Error::Training(format!("non-finite aggregate query loss {aggregate}")));
    }
    theta
        .params_mut()
        .sgd_step(beta, total.as_ref().unwrap())
        .map_err(|e| Error::Training(format!("global step: {e}")))?;
    Ok(results)
}

fn pull_back<L: Learner>(
    theta: &L,
    task: &AdaptedTask<'_, L>,
    mut v: ModelParams,
    alpha: f64,
    local_steps: usize,
) -> Result<ModelParams> {
    // replay the inner trajectory theta_0 .. theta_{k-1}
    let mut trajectory = Vec::with_capacity(local_steps);
    let mut cur = theta.clone();
    for _ in 0..local_steps {
        trajectory.push(cur.clone());
        cur = local_update(&cur, task.support, task.gamma, alpha, 1)?;
    }
    for point in trajectory.iter().rev() {
        let hv = hessian_vector(point, task.support, &v)?;
        v.axpy(-alpha * task.gamma, &hv)?;
    }
    Ok(v)
}

fn hessian_vector<L: Learner>(at: &L, batch: &L::Batch, v: &ModelParams) -> Result<ModelParams> {
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(v.zeros_like());
    }
    let eps = 1e-5 / norm.max(1.0);
    let mut plus = at.clone();
    plus.params_mut().axpy(eps, v)?;
    let mut minus = at.clone();
    minus.params_mut().axpy(-eps, v)?;
    let gp = plus.evaluate(batch)?.grads;
    let gm = minus.evaluate(batch)?.grads;
    let mut hv = gp;
    hv.axpy(-1.0, &gm)?;
    hv.scale(1.0 / (2.0 * eps));
    Ok(hv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    /// Fraction of tasks open at step 0.
    pub f0: f64,
    /// Warmup length as a fraction of `total_steps`.
    pub warmup_fraction: f64,
    /// After warmup, the share of batches drawn in proportion to query loss.
    pub hard_fraction: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            f0: 0.25,
            warmup_fraction: 0.5,
            hard_fraction: 0.2,
        }
    }
}

impl CurriculumConfig {
    /// Everything open from the first step, uniform sampling throughout.
    pub fn disabled() -> Self {
        CurriculumConfig {
            f0: 1.0,
            warmup_fraction: 0.0,
            hard_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    /// Inner learning rate.
    pub alpha: f64,
    /// Outer learning rate; `1e-3 / tasks_per_batch` when unset.
    pub beta: Option<f64>,
    pub n_way: usize,
    /// Support windows per class.
    pub k_shot: usize,
    /// Query windows per class.
    pub q_query: usize,
    pub total_steps: usize,
    pub tasks_per_batch: usize,
    pub local_steps: usize,
    pub first_order: bool,
    pub curriculum: CurriculumConfig,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            alpha: 0.01,
            beta: None,
            n_way: 3,
            k_shot: 5,
            q_query: 5,
            total_steps: 200,
            tasks_per_batch: 4,
            local_steps: 1,
            first_order: true,
            curriculum: CurriculumConfig::default(),
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || self.beta.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::Config("alpha and beta must be positive".into()));
        }
        if self.local_steps == 0 || self.tasks_per_batch == 0 {
            return Err(Error::Config("local_steps and tasks_per_batch must be positive".into()));
        }
        if self.n_way == 0 || self.k_shot == 0 || self.q_query == 0 {
            return Err(Error::Config("n_way, k_shot and q_query must be positive".into()));
        }
        let c = &self.curriculum;
        if !(c.f0 > 0.0 && c.f0 <= 1.0)
            || !(0.0..=1.0).contains(&c.warmup_fraction)
            || !(0.0..=1.0).contains(&c.hard_fraction)
        {
            return Err(Error::Config(format!("invalid curriculum settings {c:?}")));
        }
        Ok(())
    }

    pub fn effective_batch(&self, task_count: usize) -> usize {
        self.tasks_per_batch.min(task_count).max(1)
    }

    pub fn effective_beta(&self, task_count: usize) -> f64 {
        self.beta
            .unwrap_or(1e-3 / self.effective_batch(task_count) as f64)
    }

    pub fn warmup_steps(&self) -> usize {
        (self.curriculum.warmup_fraction * self.total_steps as f64).round() as usize
    }
}

/// What happened at one meta-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub tasks: Vec<String>,
    pub query_losses: Vec<f64>,
    /// Mean query loss over the batch.
    pub loss: f64,
    /// Query accuracy of the adapted models, pooled over the batch.
    pub accuracy: f64,
    pub mode: SamplingMode,
}

#[derive(Debug, Clone)]
pub struct MetaState<L> {
    pub theta: L,
    pub step: usize,
    pub history: Vec<StepRecord>,
    pub last_query_loss: BTreeMap<String, f64>,
}

/// Runs meta-training from `theta` with no per-step observer.
pub fn meta_train<L>(
    aux_tasks: &[TaskDataset],
    relevance: &RelevanceTable,
    difficulty: &DifficultyTable,
    config: &MetaConfig,
    theta: L,
) -> Result<MetaState<L>>
where
    L: Learner<Batch = [Sample]>,
{
    meta_train_with(aux_tasks, relevance, difficulty, config, theta, |_| Ok(()))
}

/// Meta-training with a callback after every step (logging, checkpoints).
pub fn meta_train_with<L>(
    aux_tasks: &[TaskDataset],
    relevance: &RelevanceTable,
    difficulty: &DifficultyTable,
    config: &MetaConfig,
    theta: L,
    mut on_step: impl FnMut(&MetaState<L>) -> Result<()>,
) -> Result<MetaState<L>>
where
    L: Learner<Batch = [Sample]>,
{
    config.validate()?;
    if aux_tasks.is_empty() {
        return Err(Error::Contract("meta-training needs auxiliary tasks".into()));
    }
    let by_id: BTreeMap<&str, &TaskDataset> =
        aux_tasks.iter().map(|t| (t.condition_id(), t)).collect();
    let mut gammas = BTreeMap::new();
    for id in by_id.keys() {
        gammas.insert(*id, relevance.gamma(id)?);
        difficulty.rank(id)?;
    }
    let ranked: Vec<&str> = difficulty
        .ordered()
        .into_iter()
        .filter(|id| by_id.contains_key(id))
        .collect();
    let a = ranked.len();
    let warmup = config.warmup_steps();
    let batch_size = config.effective_batch(a);
    let beta = config.effective_beta(a);

    let mut state = MetaState {
        theta,
        step: 0,
        history: Vec::with_capacity(config.total_steps),
        last_query_loss: BTreeMap::new(),
    };
    for step in 0..config.total_steps {
        let ctx = |e: Error| Error::Training(format!("meta-step {step}: {e}"));
        let open = pacing_available(
            &PacingState {
                step,
                warmup_steps: warmup,
                total_steps: config.total_steps,
                f0: config.curriculum.f0,
            },
            a,
        )?;
        let mut eligible: Vec<&str> = ranked[..open].to_vec();
        eligible.sort_unstable();

        let mode = if step >= warmup
            && config.curriculum.hard_fraction > 0.0
            && seed::rng(seed::derive_indexed(config.seed, "meta-mode", step as u64)).gen::<f64>()
                < config.curriculum.hard_fraction
        {
            SamplingMode::HardBiased
        } else {
            SamplingMode::Uniform
        };
        let batch = sample_task_batch(
            &eligible,
            batch_size,
            mode,
            &state.last_query_loss,
            seed::derive_indexed(config.seed, "meta-batch", step as u64),
        )?;

        let step_seed = seed::derive_indexed(config.seed, "meta-step", step as u64);
        let mut episodes = Vec::with_capacity(batch.len());
        for (slot, id) in batch.iter().enumerate() {
            let episode = sample_episode(
                by_id[id.as_str()],
                config.n_way,
                config.k_shot,
                config.q_query,
                seed::derive_indexed(step_seed, "episode", slot as u64),
            )
            .map_err(|e| ctx(Error::Data(format!("task `{id}`: {e}"))))?;
            episodes.push(episode);
        }
        let mut adapted = Vec::with_capacity(batch.len());
        for (id, episode) in batch.iter().zip(&episodes) {
            let gamma = gammas[id.as_str()];
            let theta_prime = local_update(
                &state.theta,
                &episode.support[..],
                gamma,
                config.alpha,
                config.local_steps,
            )
            .map_err(|e| ctx(Error::Training(format!("task `{id}`: {e}"))))?;
            adapted.push(AdaptedTask {
                adapted: theta_prime,
                support: &episode.support[..],
                query: &episode.query[..],
                gamma,
            });
        }
        let results = global_update(
            &mut state.theta,
            &adapted,
            beta,
            config.first_order,
            config.alpha,
            config.local_steps,
        )
        .map_err(ctx)?;
        if !state.theta.params().is_finite() {
            return Err(ctx(Error::Training("theta became non-finite".into())));
        }

        for (id, r) in batch.iter().zip(&results) {
            state.last_query_loss.insert(id.clone(), r.loss);
        }
        let correct: usize = results.iter().map(|r| r.correct).sum();
        let count: usize = results.iter().map(|r| r.count).sum();
        state.history.push(StepRecord {
            step,
            tasks: batch,
            query_losses: results.iter().map(|r| r.loss).collect(),
            loss: results.iter().map(|r| r.loss).sum::<f64>() / results.len() as f64,
            accuracy: correct as f64 / count as f64,
            mode,
        });
        state.step = step + 1;
        on_step(&state)?;
    }
    Ok(state)
}

/// Textbook MAML over the same seed streams: every task always eligible,
/// uniform task draws, unscaled inner steps. Kept deliberately separate from
/// [`meta_train`] so the two can be compared.
pub fn maml_reference(
    aux_tasks: &[TaskDataset],
    config: &MetaConfig,
    mut theta: LstmClassifierParams,
) -> Result<(LstmClassifierParams, Vec<StepRecord>)> {
    config.validate()?;
    let mut ids: Vec<&str> = aux_tasks.iter().map(|t| t.condition_id()).collect();
    ids.sort_unstable();
    let lookup = |id: &str| aux_tasks.iter().find(|t| t.condition_id() == id).unwrap();
    let batch_size = config.effective_batch(ids.len());
    let beta = config.effective_beta(ids.len());
    let mut history = Vec::new();

    for step in 0..config.total_steps {
        let mut rng = seed::rng(seed::derive_indexed(config.seed, "meta-batch", step as u64));
        let batch: Vec<String> = (0..batch_size)
            .map(|_| ids[rng.gen_range(0..ids.len())].to_string())
            .collect();
        let step_seed = seed::derive_indexed(config.seed, "meta-step", step as u64);

        let mut sum: Option<ModelParams> = None;
        let mut losses = Vec::new();
        let (mut correct, mut count) = (0, 0);
        for (slot, id) in batch.iter().enumerate() {
            let ep = sample_episode(
                lookup(id),
                config.n_way,
                config.k_shot,
                config.q_query,
                seed::derive_indexed(step_seed, "episode", slot as u64),
            )?;
            let mut fast = theta.clone();
            for _ in 0..config.local_steps {
                let g = Learner::evaluate(&fast, &ep.support[..])?.grads;
                fast.params_mut().sgd_step(config.alpha, &g)?;
            }
            let q = Learner::evaluate(&fast, &ep.query[..])?;
            losses.push(q.loss);
            correct += q.correct;
            count += q.count;
            match sum.as_mut() {
                None => sum = Some(q.grads),
                Some(s) => s.axpy(1.0, &q.grads)?,
            }
        }
        theta.params_mut().sgd_step(beta, sum.as_ref().unwrap())?;
        history.push(StepRecord {
            step,
            tasks: batch,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            query_losses: losses,
            accuracy: correct as f64 / count as f64,
            mode: SamplingMode::Uniform,
        });
    }
    Ok((theta, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    /// `L(theta) = 0.5 * a * (theta - c)^2` on a single scalar.
    #[derive(Clone, Debug)]
    struct Quadratic {
        params: ModelParams,
    }

    struct Target {
        a: f64,
        c: f64,
    }

    impl Quadratic {
        fn at(theta: f64) -> Self {
            let mut params = ModelParams::new();
            params
                .push("theta", Tensor::scalar(theta).unwrap().with_grad(true))
                .unwrap();
            Quadratic { params }
        }

        fn value(&self) -> f64 {
            self.params.get("theta").unwrap().values()[0]
        }
    }

    impl Learner for Quadratic {
        type Batch = Target;

        fn params(&self) -> &ModelParams {
            &self.params
        }

        fn params_mut(&mut self) -> &mut ModelParams {
            &mut self.params
        }

        fn evaluate(&self, t: &Target) -> Result<Evaluation> {
            let th = self.value();
            let mut grads = self.params.zeros_like();
            grads.get_mut("theta").unwrap().values_mut()[0] = t.a * (th - t.c);
            Ok(Evaluation {
                loss: 0.5 * t.a * (th - t.c).powi(2),
                grads,
                correct: 0,
                count: 1,
            })
        }
    }

    // L = theta^2 (a = 2, c = 0): gradient 2 at theta = 1
    fn toy() -> (Quadratic, Target) {
        (Quadratic::at(1.0), Target { a: 2.0, c: 0.0 })
    }

    #[test]
    fn scalar_inner_step() {
        let (th, t) = toy();
        let full = local_update(&th, &t, 1.0, 0.1, 1).unwrap();
        assert!((full.value() - 0.8).abs() < 1e-12);
        let half = local_update(&th, &t, 0.5, 0.1, 1).unwrap();
        assert!((half.value() - 0.9).abs() < 1e-12);
        assert_eq!(th.value(), 1.0);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let th = Quadratic::at(3.0);
        let t = Target { a: 1.0, c: 3.0 };
        assert_eq!(local_update(&th, &t, 0.7, 0.5, 3).unwrap().value(), 3.0);
    }

    #[test]
    fn gamma_out_of_range_rejected() {
        let (th, t) = toy();
        assert!(local_update(&th, &t, 0.0, 0.1, 1).is_err());
        assert!(local_update(&th, &t, 1.5, 0.1, 1).is_err());
    }

    #[test]
    fn zero_query_gradient_leaves_theta() {
        let mut th = Quadratic::at(2.0);
        let support = Target { a: 1.0, c: 2.0 };
        let query = Target { a: 1.0, c: 2.0 };
        let adapted = local_update(&th, &support, 1.0, 0.1, 1).unwrap();
        let tasks = [AdaptedTask {
            adapted,
            support: &support,
            query: &query,
            gamma: 1.0,
        }];
        global_update(&mut th, &tasks, 0.5, true, 0.1, 1).unwrap();
        assert_eq!(th.value(), 2.0);
    }

    #[test]
    fn first_order_single_task_is_plain_step_at_adapted_point() {
        let mut th = Quadratic::at(1.0);
        let support = Target { a: 2.0, c: 0.0 };
        let query = Target { a: 1.0, c: 3.0 };
        let adapted = local_update(&th, &support, 1.0, 0.1, 1).unwrap();
        // adapted = 0.8, query gradient there = 0.8 - 3 = -2.2
        let tasks = [AdaptedTask {
            adapted,
            support: &support,
            query: &query,
            gamma: 1.0,
        }];
        global_update(&mut th, &tasks, 0.5, true, 0.1, 1).unwrap();
        assert!((th.value() - (1.0 + 0.5 * 2.2)).abs() < 1e-12);
    }

    /// Closed form for one inner step on quadratics:
    /// theta' = theta - alpha*gamma*a_s*(theta - c_s)
    /// dLq/dtheta = a_q*(theta' - c_q)*(1 - alpha*gamma*a_s)
    fn analytic(theta: f64, s: &Target, q: &Target, alpha: f64, gamma: f64, steps: usize) -> f64 {
        let shrink = 1.0 - alpha * gamma * s.a;
        let mut th = theta;
        for _ in 0..steps {
            th -= alpha * gamma * s.a * (th - s.c);
        }
        q.a * (th - q.c) * shrink.powi(steps as i32)
    }

    #[test]
    fn exact_mode_matches_analytic_maml_gradient() {
        let alpha = 0.1;
        let beta = 1.0;
        for &(theta, gamma, steps) in &[(1.0, 1.0, 1), (-2.0, 0.5, 1), (0.7, 0.8, 3)] {
            let support = Target { a: 3.0, c: 0.5 };
            let query = Target { a: 1.5, c: -1.0 };
            let mut th = Quadratic::at(theta);
            let adapted = local_update(&th, &support, gamma, alpha, steps).unwrap();
            let tasks = [AdaptedTask {
                adapted,
                support: &support,
                query: &query,
                gamma,
            }];
            global_update(&mut th, &tasks, beta, false, alpha, steps).unwrap();
            let got = theta - th.value();
            let want = analytic(theta, &support, &query, alpha, gamma, steps);
            let rel = (got - want).abs() / want.abs();
            assert!(rel < 1e-4, "theta {theta}: got {got}, want {want}");
        }
    }

    #[test]
    fn empty_global_update_rejected() {
        let mut th = Quadratic::at(0.0);
        let tasks: [AdaptedTask<'_, Quadratic>; 0] = [];
        assert!(global_update(&mut th, &tasks, 0.1, true, 0.1, 1).is_err());
    }

    mod lstm {
        use super::super::*;
        use crate::curriculum::DifficultyTable;
        use crate::data::{generate_synthetic_task, SyntheticTaskSpec};
        use crate::nets::NetConfig;

        fn tasks() -> Vec<TaskDataset> {
            (0..3)
                .map(|i| {
                    generate_synthetic_task(
                        &SyntheticTaskSpec {
                            condition_id: format!("aux{i}"),
                            n_classes: 3,
                            samples_per_class: 12,
                            window_len: 32,
                            stride: None,
                            base_freq: 0.03,
                            impulse_rate_per_class: vec![1.0, 3.0, 6.0],
                            impulse_amplitude_per_class: vec![],
                            noise_std: 0.1,
                            condition_shift: 0.1 * i as f64,
                            period_jitter: 0.1,
                        },
                        i,
                    )
                    .unwrap()
                })
                .collect()
        }

        fn net() -> LstmClassifierParams {
            let cfg = NetConfig {
                timesteps: 4,
                hidden_size: 6,
                layers: 2,
            };
            LstmClassifierParams::init(&cfg.arch(32, 3), 11).unwrap()
        }

        fn config(steps: usize) -> MetaConfig {
            MetaConfig {
                n_way: 3,
                k_shot: 2,
                q_query: 2,
                total_steps: steps,
                tasks_per_batch: 2,
                seed: 5,
                ..MetaConfig::default()
            }
        }

        fn tables(tasks: &[TaskDataset]) -> (RelevanceTable, DifficultyTable) {
            let ids: Vec<&str> = tasks.iter().map(|t| t.condition_id()).collect();
            let scores = [("aux0", 0.9), ("aux1", 0.5), ("aux2", 0.7)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect();
            let mut rel = RelevanceTable::uniform(ids);
            rel.gamma.insert("aux1".into(), 0.4);
            (rel, DifficultyTable::from_scores(&scores).unwrap())
        }

        #[test]
        fn zero_steps_keeps_init() {
            let t = tasks();
            let (rel, diff) = tables(&t);
            let state = meta_train(&t, &rel, &diff, &config(0), net()).unwrap();
            assert_eq!(state.theta.params(), net().params());
            assert!(state.history.is_empty());
        }

        #[test]
        fn deterministic_and_history_tracks_steps() {
            let t = tasks();
            let (rel, diff) = tables(&t);
            let a = meta_train(&t, &rel, &diff, &config(6), net()).unwrap();
            let b = meta_train(&t, &rel, &diff, &config(6), net()).unwrap();
            assert_eq!(a.history, b.history);
            assert_eq!(a.theta.params(), b.theta.params());
            assert_eq!(a.history.len(), a.step);
            assert_ne!(a.theta.params(), net().params());
        }

        #[test]
        fn easy_first_on_trace() {
            let t = tasks();
            let (rel, diff) = tables(&t);
            let state = meta_train(&t, &rel, &diff, &config(10), net()).unwrap();
            let trace: Vec<Vec<String>> = state.history.iter().map(|r| r.tasks.clone()).collect();
            assert!(crate::curriculum::first_appearance_monotone(&trace, &diff).unwrap());
            // step 0 only has the easiest task open
            assert!(trace[0].iter().all(|id| id == "aux0"));
        }

        #[test]
        fn reduces_to_reference_maml() {
            let t = tasks();
            let ids: Vec<&str> = t.iter().map(|t| t.condition_id()).collect();
            let mut cfg = config(5);
            cfg.curriculum = CurriculumConfig::disabled();
            let state = meta_train(
                &t,
                &RelevanceTable::uniform(ids.clone()),
                &DifficultyTable::flat(ids),
                &cfg,
                net(),
            )
            .unwrap();
            let (theta, history) = maml_reference(&t, &cfg, net()).unwrap();
            assert_eq!(state.history, history);
            assert_eq!(state.theta.params(), theta.params());
        }
    }
}
