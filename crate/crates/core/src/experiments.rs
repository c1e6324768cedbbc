//! End-to-end experiment drivers on synthetic corpora: adaptation gain over
//! the fine-tuned baseline, the effect of task-selection strategy, the
//! modality gap, and the demonstration-count trend.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evalkit::{
    default_split, run_protocol, AgentModel, AggregateReport, Arm, EvalError, ProtocolConfig, SplitName, SplitSpec,
    DEFAULT_CROSS_TASK_PER_SITE, DEFAULT_HELD_OUT_DOMAINS, DEFAULT_HELD_OUT_SITES,
};
use crate::icl::{render_action, AgentClient, MockClient, ScriptEntry, SimulatedClient};
use crate::metatrain::{finetune, finetune_tasks, meta_train, DemoBank, FinetuneMode, MetaConfig, Strategy};
use crate::observation::{observe, Modality};
use crate::policy::{init_params, PolicyParams, DEFAULT_HIDDEN};
use crate::text::derive_seed;
use crate::webenv::{generate_corpus_with, oracle_trajectory, step, reset, Action, Corpus, CorpusProfile, Operation};

/// The default corpus: 3 training domains and 1 held-out domain, 15 sites
/// per domain, 8 tasks per site.
pub const DEFAULT_PROFILE: CorpusProfile = CorpusProfile {
    seed: 0,
    n_domains: 4,
    sites_per_domain: 15,
    tasks_per_site: 8,
    hidden_duplicates: false,
    house_style_percent: 0,
};

pub fn default_corpus() -> Corpus {
    generate_corpus_with(&DEFAULT_PROFILE)
}

/// Split of a corpus with the default held-out counts.
pub fn standard_split(corpus: &Corpus, seed: u64) -> Result<SplitSpec, EvalError> {
    default_split(
        corpus,
        DEFAULT_HELD_OUT_SITES,
        DEFAULT_HELD_OUT_DOMAINS,
        DEFAULT_CROSS_TASK_PER_SITE,
        seed,
    )
}

/// Training schedule shared by the meta-learned policy and its baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    /// Inner-loop steps per demonstration step, in training and adaptation.
    pub inner_steps: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.05,
            beta: 0.2,
            epochs: 80,
            inner_steps: 3,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// `protocol` with this schedule's adaptation settings.
    pub fn protocol(&self, protocol: &ProtocolConfig) -> ProtocolConfig {
        ProtocolConfig {
            alpha: self.alpha,
            inner_steps: self.inner_steps,
            ..protocol.clone()
        }
    }

    pub fn meta_config(&self, strategy: Strategy) -> MetaConfig {
        MetaConfig {
            alpha: self.alpha,
            beta: self.beta,
            strategy,
            meta_epochs: self.epochs,
            inner_steps_per_demo_step: self.inner_steps,
            seed: self.seed,
            hidden: self.hidden,
            ..MetaConfig::default()
        }
    }
}

/// θ* from meta-training on the split's training tasks.
pub fn train_meta(
    corpus: &Corpus,
    split: &SplitSpec,
    strategy: Strategy,
    training: &TrainingConfig,
    modality: Modality,
) -> Result<PolicyParams, EvalError> {
    let train = split.train_corpus(corpus);
    let bank = DemoBank::new(&train, modality);
    Ok(meta_train(&train, &training.meta_config(strategy), &bank)?.params)
}

/// The data-equivalent fine-tuned baseline: plain SGD at rate α over the
/// same task multiset meta-training consumes, for the same epochs.
pub fn train_ft_de(
    corpus: &Corpus,
    split: &SplitSpec,
    strategy: Strategy,
    training: &TrainingConfig,
    modality: Modality,
) -> Result<PolicyParams, EvalError> {
    let train = split.train_corpus(corpus);
    let bank = DemoBank::new(&train, modality);
    let config = training.meta_config(strategy);
    let tasks = finetune_tasks(&train, FinetuneMode::De, &config)?;
    let init = init_params(training.seed, training.hidden);
    Ok(finetune(&init, &tasks, &bank, training.alpha, training.epochs, training.seed)?.params)
}

pub const TRANSFER_SPLITS: [SplitName; 2] = [SplitName::CrossWebsite, SplitName::CrossDomain];

/// Baseline and adapted reports on one split.
#[derive(Debug, Clone, Serialize)]
pub struct GainRow {
    pub split: SplitName,
    pub baseline: AggregateReport,
    pub adapted: AggregateReport,
}

/// POLICY_FT_DE against POLICY_FOMAML_ADAPTED on the transfer splits.
pub fn adaptation_gain(
    corpus: &Corpus,
    split: &SplitSpec,
    training: &TrainingConfig,
    protocol: &ProtocolConfig,
) -> Result<Vec<GainRow>, EvalError> {
    let modality = Modality::Multimodal;
    let (meta, ft_de) = rayon::join(
        || train_meta(corpus, split, Strategy::Hybrid, training, modality),
        || train_ft_de(corpus, split, Strategy::Hybrid, training, modality),
    );
    let (meta, ft_de) = (meta?, ft_de?);
    let bank = DemoBank::new(corpus, modality);
    let protocol = training.protocol(protocol);
    TRANSFER_SPLITS
        .iter()
        .map(|&which| {
            Ok(GainRow {
                split: which,
                baseline: run_protocol(Arm::PolicyFtDe, AgentModel::Policy(&ft_de), &bank, split, which, &protocol)?,
                adapted: run_protocol(
                    Arm::PolicyFomamlAdapted,
                    AgentModel::Policy(&meta),
                    &bank,
                    split,
                    which,
                    &protocol,
                )?,
            })
        })
        .collect()
}

/// Adapted reports of one strategy's θ* on the transfer splits.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub reports: Vec<AggregateReport>,
}

impl StrategyRow {
    pub fn overall_sr(&self, which: SplitName) -> Option<f64> {
        self.reports
            .iter()
            .find(|r| r.split == which)
            .map(|r| r.metrics.overall_sr.mean)
    }
}

/// POLICY_FOMAML_ADAPTED for each task-selection strategy.
pub fn strategy_comparison(
    corpus: &Corpus,
    split: &SplitSpec,
    training: &TrainingConfig,
    protocol: &ProtocolConfig,
) -> Result<Vec<StrategyRow>, EvalError> {
    let modality = Modality::Multimodal;
    let strategies = [Strategy::Intra, Strategy::Inter, Strategy::Hybrid];
    let thetas: Vec<PolicyParams> = strategies
        .par_iter()
        .map(|&s| train_meta(corpus, split, s, training, modality))
        .collect::<Result<_, _>>()?;
    let bank = DemoBank::new(corpus, modality);
    let protocol = training.protocol(protocol);
    strategies
        .iter()
        .zip(&thetas)
        .map(|(&strategy, theta)| {
            let reports = TRANSFER_SPLITS
                .iter()
                .map(|&which| {
                    run_protocol(Arm::PolicyFomamlAdapted, AgentModel::Policy(theta), &bank, split, which, &protocol)
                })
                .collect::<Result<_, _>>()?;
            Ok(StrategyRow { strategy, reports })
        })
        .collect()
}

/// The layout-disambiguated variant of the default corpus.
pub fn hidden_duplicate_corpus() -> Corpus {
    generate_corpus_with(&CorpusProfile {
        hidden_duplicates: true,
        ..DEFAULT_PROFILE
    })
}

/// Step SR per agent and modality on one split.
#[derive(Debug, Clone, Serialize)]
pub struct ModalityRow {
    pub agent: Arm,
    pub multimodal: AggregateReport,
    pub text_only: AggregateReport,
}

impl ModalityRow {
    pub fn step_sr_gap(&self) -> f64 {
        self.multimodal.metrics.step_sr.mean - self.text_only.metrics.step_sr.mean
    }
}

/// In-context prompting with the deterministic prompt reader, and the
/// adapted policy trained in each modality, evaluated cross-website.
pub fn modality_gap(
    corpus: &Corpus,
    split: &SplitSpec,
    training: &TrainingConfig,
    protocol: &ProtocolConfig,
) -> Result<Vec<ModalityRow>, EvalError> {
    let which = SplitName::CrossWebsite;
    let protocol = training.protocol(protocol);
    let client = SimulatedClient;
    let icl = |modality| {
        let bank = DemoBank::new(corpus, modality);
        run_protocol(Arm::IclNDemos, AgentModel::Client(&client), &bank, split, which, &protocol)
    };
    let policy = |modality| -> Result<AggregateReport, EvalError> {
        let theta = train_meta(corpus, split, Strategy::Hybrid, training, modality)?;
        let bank = DemoBank::new(corpus, modality);
        run_protocol(Arm::PolicyFomamlAdapted, AgentModel::Policy(&theta), &bank, split, which, &protocol)
    };
    let (pm, pt) = rayon::join(|| policy(Modality::Multimodal), || policy(Modality::TextOnly));
    Ok(vec![
        ModalityRow {
            agent: Arm::IclNDemos,
            multimodal: icl(Modality::Multimodal)?,
            text_only: icl(Modality::TextOnly)?,
        },
        ModalityRow {
            agent: Arm::PolicyFomamlAdapted,
            multimodal: pm?,
            text_only: pt?,
        },
    ])
}

/// Probability that the scripted agent answers a step correctly given `n`
/// demonstrations: rises quickly, then saturates.
pub fn scripted_accuracy(n: usize) -> f64 {
    let n = n.max(1) as f64;
    0.85 - 0.5 / (n * n)
}

/// A keyed script answering every step of the split's tasks. Each step
/// gets one fixed draw in [0, 1), spread evenly over the steps, and is
/// answered correctly when the draw falls below `accuracy`; otherwise the
/// script clicks another candidate. Correct sets are nested in `accuracy`.
pub fn scripted_responses(
    corpus: &Corpus,
    split: &SplitSpec,
    which: SplitName,
    accuracy: f64,
    protocol: &ProtocolConfig,
    seed: u64,
) -> Result<Vec<ScriptEntry>, EvalError> {
    let index = corpus.index();
    let mut steps: Vec<(String, usize, Action, Action)> = Vec::new();
    for id in split.tasks(which) {
        let (site, task) = index
            .task(id)
            .ok_or_else(|| EvalError::InvalidSplit(format!("unknown task {id}")))?;
        let gold = oracle_trajectory(site, task)?;
        let mut state = reset(site, task)?;
        for (i, g) in gold.steps.iter().enumerate() {
            let obs = observe(site, &state, &task.instruction, protocol.k, protocol.viewport)?;
            let wrong = obs
                .candidates
                .candidates
                .iter()
                .map(|c| &c.descriptor.element_id)
                .find(|e| **e != g.action.element_id)
                .map(|e| Action::click(e.clone()))
                .unwrap_or_else(|| Action {
                    operation: if g.action.operation == Operation::Click {
                        Operation::Type
                    } else {
                        Operation::Click
                    },
                    value: None,
                    ..g.action.clone()
                });
            steps.push((task.task_id.clone(), i, g.action.clone(), wrong));
            state = step(&state, site, task, &g.action)?;
        }
    }
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &["script"])));
    let total = steps.len().max(1) as f64;
    let mut draws = vec![0.0; steps.len()];
    for (rank, &i) in order.iter().enumerate() {
        draws[i] = (rank as f64 + 0.5) / total;
    }
    Ok(steps
        .into_iter()
        .zip(draws)
        .map(|((task_id, i, gold, wrong), u)| {
            let action = if u < accuracy { gold } else { wrong };
            ScriptEntry::keyed(task_id, i, render_action(&action))
        })
        .collect())
}

/// Step SR of ICL_N_DEMOS under the scripted client for each demo count.
#[derive(Debug, Clone, Serialize)]
pub struct TrendPoint {
    pub n_demos: usize,
    pub report: AggregateReport,
}

pub fn ndemo_trend(
    corpus: &Corpus,
    split: &SplitSpec,
    which: SplitName,
    counts: &[usize],
    protocol: &ProtocolConfig,
) -> Result<Vec<TrendPoint>, EvalError> {
    let bank = DemoBank::new(corpus, Modality::Multimodal);
    counts
        .iter()
        .map(|&n| {
            let script = scripted_responses(corpus, split, which, scripted_accuracy(n), protocol, protocol.seed)?;
            let client = MockClient::new(script, false);
            let config = ProtocolConfig {
                n_demos: n,
                ..protocol.clone()
            };
            let report = run_protocol(Arm::IclNDemos, AgentModel::Client(&client as &dyn AgentClient), &bank, split, which, &config)?;
            Ok(TrendPoint { n_demos: n, report })
        })
        .collect()
}
