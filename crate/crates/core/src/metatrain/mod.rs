//! Meta-training, task selection, fine-tuning baselines and few-shot
//! adaptation of the policy.
//!
//! Each training website gets one fixed [`TaskBatch`]: `n_adapt_tasks`
//! demonstrations from the site for the inner loop and `n_eval_tasks`
//! held-out tasks, chosen by the selection strategy, for the outer update.
//! The same batches define the task multiset used by data-equivalent
//! fine-tuning.

mod fomaml;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demostore::{validate, TrajectoryRecord};
use crate::domkit::DEFAULT_K;
use crate::layout::DEFAULT_VIEWPORT;
use crate::observation::Modality;
use crate::policy::{self, demo_examples, init_params, EncodeError, Gradient, PolicyError, PolicyParams, StepExample};
use crate::text::derive_seed;
use crate::webenv::{oracle_trajectory, Corpus, Task, Trajectory};

pub use fomaml::{fomaml_step_with, inner_adapt_with, BatchLosses, Objective, QuadraticProbe};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaError {
    #[error("website {website_id} has {found} tasks, {needed} needed")]
    InsufficientTasks {
        website_id: String,
        needed: usize,
        found: usize,
    },
    #[error("website {0} has no peer website in its domain")]
    NoPeerWebsite(String),
    #[error("unknown website {0}")]
    UnknownWebsite(String),
    #[error("no demonstration for task {0}")]
    MissingDemonstration(String),
    #[error("demonstration for task {task_id} failed validation: {failures:?}")]
    InvalidDemonstration { task_id: String, failures: Vec<String> },
    #[error("target tasks span several domains: {0:?}")]
    MixedTargets(Vec<String>),
    #[error("no tasks given")]
    NoTasks,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Intra,
    Inter,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Intra, Strategy::Inter, Strategy::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Intra => "INTRA",
            Strategy::Inter => "INTER",
            Strategy::Hybrid => "HYBRID",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "intra" => Ok(Strategy::Intra),
            "inter" => Ok(Strategy::Inter),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(format!("unknown strategy {other:?} (expected intra, inter or hybrid)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub alpha: f64,
    pub beta: f64,
    pub inner_steps_per_demo_step: usize,
    pub meta_batch_size: usize,
    pub strategy: Strategy,
    pub n_adapt_tasks: usize,
    pub n_eval_tasks: usize,
    pub meta_epochs: usize,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            alpha: 0.05,
            beta: 0.01,
            inner_steps_per_demo_step: 1,
            meta_batch_size: 1,
            strategy: Strategy::Hybrid,
            n_adapt_tasks: 2,
            n_eval_tasks: 2,
            meta_epochs: 10,
            seed: 0,
            hidden: policy::DEFAULT_HIDDEN,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        let bad = |m: &str| Err(MetaError::InvalidConfig(m.to_owned()));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be a non-negative number");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta must be a non-negative number");
        }
        if self.inner_steps_per_demo_step == 0 || self.meta_batch_size == 0 {
            return bad("inner steps and meta batch size must be positive");
        }
        if self.n_adapt_tasks == 0 || self.n_eval_tasks == 0 {
            return bad("task counts must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBatch {
    pub website_id: String,
    pub d_train: Vec<Task>,
    pub d_test: Vec<Task>,
    pub provenance: Strategy,
}

impl TaskBatch {
    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.d_train.iter().chain(&self.d_test).map(|t| t.task_id.as_str())
    }
}

/// [`select_tasks_with`] with two adaptation and two evaluation tasks.
pub fn select_tasks(corpus: &Corpus, website_id: &str, strategy: Strategy, seed: u64) -> Result<TaskBatch, MetaError> {
    select_tasks_with(corpus, website_id, strategy, seed, 2, 2)
}

/// Seeded selection, uniform without replacement. The train tasks always
/// come from `website_id`; test tasks come from the same site (INTRA), from
/// one peer site in the same domain (INTER), or half from each (HYBRID,
/// own site first).
pub fn select_tasks_with(
    corpus: &Corpus,
    website_id: &str,
    strategy: Strategy,
    seed: u64,
    n_adapt: usize,
    n_eval: usize,
) -> Result<TaskBatch, MetaError> {
    let site = corpus
        .site(website_id)
        .ok_or_else(|| MetaError::UnknownWebsite(website_id.to_owned()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (own_test, peer_test) = match strategy {
        Strategy::Intra => (n_eval, 0),
        Strategy::Inter => (0, n_eval),
        Strategy::Hybrid => (n_eval.div_ceil(2), n_eval / 2),
    };
    let needed = n_adapt + own_test;
    if site.tasks.len() < needed {
        return Err(MetaError::InsufficientTasks {
            website_id: website_id.to_owned(),
            needed,
            found: site.tasks.len(),
        });
    }
    let mut own: Vec<&Task> = site.tasks.iter().collect();
    own.shuffle(&mut rng);
    let d_train: Vec<Task> = own[..n_adapt].iter().map(|t| (*t).clone()).collect();
    let mut d_test: Vec<Task> = own[n_adapt..needed].iter().map(|t| (*t).clone()).collect();

    if peer_test > 0 {
        let peers: Vec<_> = corpus
            .domains
            .iter()
            .filter(|d| d.domain_id == site.domain_id)
            .flat_map(|d| d.sites.iter())
            .filter(|s| s.site_id != site.site_id && s.tasks.len() >= peer_test)
            .collect();
        let peer = peers
            .choose(&mut rng)
            .ok_or_else(|| MetaError::NoPeerWebsite(website_id.to_owned()))?;
        let mut pool: Vec<&Task> = peer.tasks.iter().collect();
        pool.shuffle(&mut rng);
        d_test.extend(pool[..peer_test].iter().map(|t| (*t).clone()));
    }
    Ok(TaskBatch {
        website_id: website_id.to_owned(),
        d_train,
        d_test,
        provenance: strategy,
    })
}

/// One batch per training website, fixed for the whole run.
pub fn training_batches(corpus: &Corpus, config: &MetaConfig) -> Result<Vec<TaskBatch>, MetaError> {
    let mut sites: Vec<&str> = corpus.sites().map(|s| s.site_id.as_str()).collect();
    sites.sort_unstable();
    sites
        .into_iter()
        .map(|site| {
            select_tasks_with(
                corpus,
                site,
                config.strategy,
                derive_seed(config.seed, &["select", site]),
                config.n_adapt_tasks,
                config.n_eval_tasks,
            )
        })
        .collect()
}

/// Task multiset consumed by meta-training (train then test tasks of every
/// batch, batches in website order).
pub fn consumed_tasks(corpus: &Corpus, config: &MetaConfig) -> Result<Vec<String>, MetaError> {
    Ok(training_batches(corpus, config)?
        .iter()
        .flat_map(|b| b.task_ids().map(str::to_owned).collect::<Vec<_>>())
        .collect())
}

/// Demonstrations by task: a validated recording when one was supplied,
/// otherwise the oracle trajectory. Encoded examples are cached.
pub struct DemoBank<'c> {
    corpus: &'c Corpus,
    modality: Modality,
    recorded: HashMap<String, Trajectory>,
    cache: Mutex<HashMap<String, Arc<Vec<StepExample>>>>,
}

impl<'c> DemoBank<'c> {
    pub fn new(corpus: &'c Corpus, modality: Modality) -> Self {
        DemoBank {
            corpus,
            modality,
            recorded: HashMap::new(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Adds recorded demonstrations; each must pass validation against the
    /// corpus.
    pub fn with_records(mut self, records: &[TrajectoryRecord]) -> Result<Self, MetaError> {
        for r in records {
            let result = validate(r, self.corpus).map_err(|e| MetaError::InvalidDemonstration {
                task_id: r.task_id.clone(),
                failures: vec![e.to_string()],
            })?;
            if !result.is_ok() {
                return Err(MetaError::InvalidDemonstration {
                    task_id: r.task_id.clone(),
                    failures: result.failures,
                });
            }
            self.recorded.insert(r.task_id.clone(), r.trajectory());
        }
        self.cache.lock().expect("cache lock").clear();
        Ok(self)
    }

    pub fn corpus(&self) -> &'c Corpus {
        self.corpus
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn trajectory(&self, task: &Task) -> Result<Trajectory, MetaError> {
        if let Some(t) = self.recorded.get(&task.task_id) {
            return Ok(t.clone());
        }
        let site = self
            .corpus
            .site(&task.site_id)
            .ok_or_else(|| MetaError::MissingDemonstration(task.task_id.clone()))?;
        oracle_trajectory(site, task).map_err(|_| MetaError::MissingDemonstration(task.task_id.clone()))
    }

    pub fn examples(&self, task_id: &str) -> Result<Arc<Vec<StepExample>>, MetaError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(task_id) {
            return Ok(Arc::clone(hit));
        }
        let (site, task) = self
            .corpus
            .find_task(task_id)
            .ok_or_else(|| MetaError::MissingDemonstration(task_id.to_owned()))?;
        let traj = self.trajectory(task)?;
        let examples = Arc::new(demo_examples(site, task, &traj, self.modality, DEFAULT_K, DEFAULT_VIEWPORT)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(task_id.to_owned(), Arc::clone(&examples));
        Ok(examples)
    }

    /// Examples of several tasks, concatenated in the given order.
    pub fn examples_for<'t>(&self, task_ids: impl IntoIterator<Item = &'t str>) -> Result<Vec<StepExample>, MetaError> {
        let mut out = Vec::new();
        for id in task_ids {
            out.extend(self.examples(id)?.iter().cloned());
        }
        Ok(out)
    }
}

/// The policy loss as an [`Objective`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyObjective;

impl Objective for PolicyObjective {
    type Params = PolicyParams;
    type Grad = Gradient;
    type Example = StepExample;

    fn loss(&self, params: &PolicyParams, batch: &[StepExample]) -> f64 {
        policy::mean_loss(params, batch)
    }

    fn grad(&self, params: &PolicyParams, batch: &[StepExample]) -> Gradient {
        policy::grad(params, batch).unwrap_or_else(|_| Gradient::zeros(params.dims))
    }

    fn zero_grad(&self, params: &PolicyParams) -> Gradient {
        Gradient::zeros(params.dims)
    }

    fn add_grad(&self, acc: &mut Gradient, g: &Gradient) {
        acc.add_assign(g).expect("gradients share dims");
    }

    fn apply(&self, params: &PolicyParams, g: &Gradient, lr: f64) -> PolicyParams {
        params.apply_update(g, lr).expect("gradient matches params")
    }
}

/// θ_i from θ on the demonstrations of `d_train`, in task then step order.
pub fn inner_adapt(
    params: &PolicyParams,
    d_train: &[Task],
    demos: &DemoBank<'_>,
    alpha: f64,
    steps_per_demo_step: usize,
) -> Result<PolicyParams, MetaError> {
    if d_train.is_empty() {
        return Err(MetaError::NoTasks);
    }
    let examples = demos.examples_for(d_train.iter().map(|t| t.task_id.as_str()))?;
    Ok(inner_adapt_with(&PolicyObjective, params, &examples, alpha, steps_per_demo_step))
}

struct PreparedBatch {
    website_id: String,
    train: Vec<StepExample>,
    test: Vec<StepExample>,
}

fn prepare(batches: &[TaskBatch], demos: &DemoBank<'_>) -> Result<Vec<PreparedBatch>, MetaError> {
    batches
        .iter()
        .map(|b| {
            Ok(PreparedBatch {
                website_id: b.website_id.clone(),
                train: demos.examples_for(b.d_train.iter().map(|t| t.task_id.as_str()))?,
                test: demos.examples_for(b.d_test.iter().map(|t| t.task_id.as_str()))?,
            })
        })
        .collect()
}

/// One outer step over `batches` from `params`.
pub fn fomaml_meta_step(
    params: &PolicyParams,
    batches: &[TaskBatch],
    demos: &DemoBank<'_>,
    config: &MetaConfig,
) -> Result<PolicyParams, MetaError> {
    if batches.is_empty() {
        return Err(MetaError::NoTasks);
    }
    let prepared = prepare(batches, demos)?;
    let (next, _) = fomaml_step_with(
        &PolicyObjective,
        params,
        &prepared,
        |b| (&b.train[..], &b.test[..]),
        config.alpha,
        config.beta,
        config.inner_steps_per_demo_step,
    );
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLogRecord {
    pub epoch: usize,
    pub website_id: String,
    pub inner_loss_before: f64,
    pub inner_loss_after: f64,
    pub meta_loss: f64,
}

#[derive(Debug, Clone)]
pub struct MetaOutcome {
    pub params: PolicyParams,
    pub log: Vec<MetaLogRecord>,
    pub batches: Vec<TaskBatch>,
}

impl MetaOutcome {
    /// Mean meta loss per epoch.
    pub fn epoch_meta_losses(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.log {
            if sums.len() <= r.epoch {
                sums.resize(r.epoch + 1, (0.0, 0));
            }
            sums[r.epoch].0 += r.meta_loss;
            sums[r.epoch].1 += 1;
        }
        sums.iter().map(|(s, n)| s / (*n).max(1) as f64).collect()
    }
}

/// Meta-trains from `init_params(config.seed, config.hidden)`.
pub fn meta_train(corpus_train: &Corpus, config: &MetaConfig, demos: &DemoBank<'_>) -> Result<MetaOutcome, MetaError> {
    meta_train_from(init_params(config.seed, config.hidden), corpus_train, config, demos)
}

/// `meta_epochs` passes over the training websites in a seeded shuffled
/// order, `meta_batch_size` websites per outer step.
pub fn meta_train_from(
    init: PolicyParams,
    corpus_train: &Corpus,
    config: &MetaConfig,
    demos: &DemoBank<'_>,
) -> Result<MetaOutcome, MetaError> {
    meta_train_with(&PolicyObjective, init, corpus_train, config, demos)
}

/// [`meta_train_from`] over any objective whose examples are policy steps;
/// used to instrument gradient calls.
pub fn meta_train_with<O>(
    obj: &O,
    init: PolicyParams,
    corpus_train: &Corpus,
    config: &MetaConfig,
    demos: &DemoBank<'_>,
) -> Result<MetaOutcome, MetaError>
where
    O: Objective<Params = PolicyParams, Example = StepExample>,
{
    config.validate()?;
    let batches = training_batches(corpus_train, config)?;
    let prepared = prepare(&batches, demos)?;
    let mut params = init;
    let mut log = Vec::new();
    for epoch in 0..config.meta_epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["epoch", &epoch.to_string()]));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.meta_batch_size) {
            let mut group: Vec<&PreparedBatch> = chunk.iter().map(|&i| &prepared[i]).collect();
            group.sort_by(|a, b| a.website_id.cmp(&b.website_id));
            let (next, losses) = fomaml_step_with(
                obj,
                &params,
                &group,
                |b| (&b.train[..], &b.test[..]),
                config.alpha,
                config.beta,
                config.inner_steps_per_demo_step,
            );
            for (b, l) in group.iter().zip(losses) {
                log.push(MetaLogRecord {
                    epoch,
                    website_id: b.website_id.clone(),
                    inner_loss_before: l.inner_before,
                    inner_loss_after: l.inner_after,
                    meta_loss: l.meta,
                });
            }
            params = next;
        }
    }
    Ok(MetaOutcome { params, log, batches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneMode {
    /// Every task of the training split.
    Full,
    /// Exactly the task multiset meta-training consumes.
    De,
}

impl FromStr for FinetuneMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(FinetuneMode::Full),
            "de" => Ok(FinetuneMode::De),
            other => Err(format!("unknown fine-tuning mode {other:?} (expected full or de)")),
        }
    }
}

/// Tasks a fine-tuning baseline trains on.
pub fn finetune_tasks(corpus_train: &Corpus, mode: FinetuneMode, config: &MetaConfig) -> Result<Vec<String>, MetaError> {
    match mode {
        FinetuneMode::Full => Ok(corpus_train.tasks().map(|t| t.task_id.clone()).collect()),
        FinetuneMode::De => consumed_tasks(corpus_train, config),
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: PolicyParams,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Plain SGD, one example per update, over every demonstration step of
/// `task_ids` (a multiset), reshuffled each epoch.
pub fn finetune(
    params: &PolicyParams,
    task_ids: &[String],
    demos: &DemoBank<'_>,
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<FinetuneOutcome, MetaError> {
    if task_ids.is_empty() {
        return Err(MetaError::NoTasks);
    }
    let examples = demos.examples_for(task_ids.iter().map(String::as_str))?;
    let obj = PolicyObjective;
    let mut p = params.clone();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["finetune", &epoch.to_string()]));
        order.shuffle(&mut rng);
        for i in order {
            let g = obj.grad(&p, &examples[i..=i]);
            p = obj.apply(&p, &g, lr);
        }
        epoch_losses.push(obj.loss(&p, &examples));
    }
    Ok(FinetuneOutcome {
        params: p,
        epoch_losses,
    })
}

/// Few-shot adaptation to a target website or domain: the inner loop run on
/// the target demonstrations. All tasks must share a domain.
pub fn adapt_to_target(
    theta_star: &PolicyParams,
    target_tasks: &[Task],
    demos: &DemoBank<'_>,
    alpha: f64,
    steps_per_demo_step: usize,
) -> Result<PolicyParams, MetaError> {
    let mut domains: Vec<String> = target_tasks.iter().map(|t| t.domain_id.clone()).collect();
    domains.sort();
    domains.dedup();
    if domains.len() > 1 {
        return Err(MetaError::MixedTargets(domains));
    }
    inner_adapt(theta_star, target_tasks, demos, alpha, steps_per_demo_step)
}
