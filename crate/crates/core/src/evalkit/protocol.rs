//! The multi-run evaluation protocol.
//!
//! Each run draws, per adaptation target, `n_adapt_tasks` tasks with its own
//! selection seed. The target is the website on cross-task and
//! cross-website, and the whole domain on cross-domain (where the draw also
//! covers every in-context demonstration). Drawn tasks are the adaptation
//! (or in-context) material and are left out of scoring; the target's other
//! split tasks are scored. For cross-task, the material comes from the
//! website's training tasks and all of its cross-task tasks are scored. Every arm sees the same draws, so
//! arms are compared on identical task sets. TRAJECTORY scoring is teacher
//! forced on the gold trajectory; LIVE additionally runs the agent
//! free in the environment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, EvalMode, Metrics, StepRecord, TaskReport};
use super::split::{SplitName, SplitSpec};
use super::stratify::{stratify_difficulty, Difficulty, DifficultyLabel, VisualThresholds};
use super::EvalError;
use crate::domkit::{serialize_elements, DEFAULT_K};
use crate::icl::{build_prompt, deconstruct_demo, element_name, parse_action_response, query_agent, AgentClient, Demo, PromptBundle, QueryStep, BASE_PROMPT};
use crate::layout::{visual_complexity, Viewport, DEFAULT_VIEWPORT};
use crate::metatrain::{adapt_to_target, DemoBank};
use crate::observation::{observe, Modality, Observation};
use crate::policy::{encode_step, predict, PolicyParams};
use crate::text::derive_seed;
use crate::webenv::{reset, step, Action, SiteSpec, Task, STEP_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Arm {
    SeeactMock,
    PolicyFt,
    PolicyFtDe,
    PolicyFomaml,
    PolicyFomamlAdapted,
    IclNDemos,
}

impl Arm {
    pub const ALL: [Arm; 6] = [
        Arm::SeeactMock,
        Arm::PolicyFt,
        Arm::PolicyFtDe,
        Arm::PolicyFomaml,
        Arm::PolicyFomamlAdapted,
        Arm::IclNDemos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::SeeactMock => "SEEACT_MOCK",
            Arm::PolicyFt => "POLICY_FT",
            Arm::PolicyFtDe => "POLICY_FT_DE",
            Arm::PolicyFomaml => "POLICY_FOMAML",
            Arm::PolicyFomamlAdapted => "POLICY_FOMAML_ADAPTED",
            Arm::IclNDemos => "ICL_N_DEMOS",
        }
    }

    pub fn is_policy(self) -> bool {
        !matches!(self, Arm::SeeactMock | Arm::IclNDemos)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.to_ascii_uppercase().replace('-', "_");
        Arm::ALL
            .into_iter()
            .find(|a| a.as_str() == wanted)
            .ok_or_else(|| format!("unknown arm {s:?}"))
    }
}

/// What answers for an arm: policy parameters or a prompt-driven client.
#[derive(Clone, Copy)]
pub enum AgentModel<'a> {
    Policy(&'a PolicyParams),
    Client(&'a dyn AgentClient),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_runs: usize,
    pub seed: u64,
    pub mode: EvalMode,
    pub k: usize,
    pub viewport: Viewport,
    pub n_adapt_tasks: usize,
    pub alpha: f64,
    pub inner_steps: usize,
    /// Demonstrations per prompt for ICL_N_DEMOS.
    pub n_demos: usize,
    /// Computed from the corpus when absent.
    pub visual_thresholds: Option<VisualThresholds>,
    pub parallel: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_runs: 5,
            seed: 0,
            mode: EvalMode::Trajectory,
            k: DEFAULT_K,
            viewport: DEFAULT_VIEWPORT,
            n_adapt_tasks: 2,
            alpha: 0.05,
            inner_steps: 1,
            n_demos: 1,
            visual_thresholds: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation; `None` when empty.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub ele_acc: MeanStd,
    pub op_f1: MeanStd,
    pub step_sr: MeanStd,
    pub overall_sr: MeanStd,
}

impl MetricsSummary {
    pub fn of(runs: &[Metrics]) -> Option<MetricsSummary> {
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        Some(MetricsSummary {
            ele_acc: pick(|m| m.ele_acc)?,
            op_f1: pick(|m| m.op_f1)?,
            step_sr: pick(|m| m.step_sr)?,
            overall_sr: pick(|m| m.overall_sr)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StratumTable {
    pub easy: Option<MetricsSummary>,
    pub medium: Option<MetricsSummary>,
    pub hard: Option<MetricsSummary>,
}

impl StratumTable {
    pub fn get(&self, d: Difficulty) -> Option<&MetricsSummary> {
        match d {
            Difficulty::Easy => self.easy.as_ref(),
            Difficulty::Medium => self.medium.as_ref(),
            Difficulty::Hard => self.hard.as_ref(),
        }
    }

    fn set(&mut self, d: Difficulty, v: Option<MetricsSummary>) {
        match d {
            Difficulty::Easy => self.easy = v,
            Difficulty::Medium => self.medium = v,
            Difficulty::Hard => self.hard = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Strata {
    pub sequence: StratumTable,
    pub visual: StratumTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTaskReport {
    pub run: usize,
    #[serde(flatten)]
    pub report: TaskReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub arm: Arm,
    pub split: SplitName,
    pub n_runs: usize,
    pub mode: EvalMode,
    pub modality: Modality,
    pub metrics: MetricsSummary,
    pub strata: Strata,
    /// Per-run metrics, in run order.
    pub runs: Vec<Metrics>,
    #[serde(skip)]
    pub tasks: Vec<RunTaskReport>,
}

/// A ready-to-act agent for one website in one run.
enum SiteAgent<'a> {
    Policy(PolicyParams),
    Icl {
        client: &'a dyn AgentClient,
        prompt: PromptBundle,
    },
}

impl SiteAgent<'_> {
    fn act(
        &self,
        task: &Task,
        step_index: usize,
        obs: &Observation,
        history: &[(String, Action)],
        modality: Modality,
    ) -> Result<Option<Action>, EvalError> {
        match self {
            SiteAgent::Policy(params) => {
                if obs.candidates.is_empty() {
                    return Ok(None);
                }
                let pred = predict(params, &encode_step(&task.instruction, obs, modality));
                Ok(Some(Action {
                    element_id: pred.element_id,
                    operation: pred.operation,
                    value: pred.value,
                }))
            }
            SiteAgent::Icl { client, prompt } => {
                let current = QueryStep {
                    task_id: &task.task_id,
                    step_index,
                    instruction: &task.instruction,
                    observation: obs,
                    history,
                };
                let text = query_agent(*client, prompt, &current)?;
                Ok(parse_action_response(&text, &obs.candidates).ok())
            }
        }
    }
}

fn display_name(site: &SiteSpec, page_id: &str, element_id: &str) -> String {
    site.page(page_id)
        .ok()
        .and_then(|p| serialize_elements(p).into_iter().find(|d| d.element_id == element_id))
        .map(|d| element_name(&d))
        .unwrap_or_else(|| element_id.to_owned())
}

struct EvalContext<'a, 'c> {
    bank: &'a DemoBank<'c>,
    config: &'a ProtocolConfig,
    thresholds: VisualThresholds,
}

impl EvalContext<'_, '_> {
    fn evaluate_task(&self, agent: &SiteAgent<'_>, site: &SiteSpec, task: &Task) -> Result<TaskReport, EvalError> {
        let modality = self.bank.modality();
        let gold = self.bank.trajectory(task)?;
        let mut state = reset(site, task)?;
        let mut history: Vec<(String, Action)> = Vec::new();
        let mut steps = Vec::with_capacity(gold.len());
        let mut complexities = Vec::with_capacity(gold.len());
        for (i, g) in gold.steps.iter().enumerate() {
            let obs = observe(site, &state, &task.instruction, self.config.k, self.config.viewport)?;
            complexities.push(visual_complexity(&obs.layout));
            let pred = agent.act(task, i, &obs, &history, modality)?;
            steps.push(StepRecord::score(i, pred, g.action.clone()));
            history.push((display_name(site, &state.current_page_id, &g.action.element_id), g.action.clone()));
            state = step(&state, site, task, &g.action)?;
        }
        let difficulty: DifficultyLabel = stratify_difficulty(gold.len(), &complexities, self.thresholds);
        let mut report = TaskReport::new(&task.task_id, &site.site_id, &site.domain_id, steps, difficulty);
        if self.config.mode == EvalMode::Live {
            report.live_success = Some(self.run_live(agent, site, task)?);
        }
        Ok(report)
    }

    /// Free-running episode; an unusable or rejected action ends it.
    fn run_live(&self, agent: &SiteAgent<'_>, site: &SiteSpec, task: &Task) -> Result<bool, EvalError> {
        let modality = self.bank.modality();
        let mut state = reset(site, task)?;
        let mut history: Vec<(String, Action)> = Vec::new();
        for i in 0..STEP_CAP as usize {
            if state.terminated {
                break;
            }
            let obs = observe(site, &state, &task.instruction, self.config.k, self.config.viewport)?;
            let Some(action) = agent.act(task, i, &obs, &history, modality)? else {
                return Ok(false);
            };
            let name = display_name(site, &state.current_page_id, &action.element_id);
            match step(&state, site, task, &action) {
                Ok(next) => state = next,
                Err(_) => return Ok(false),
            }
            history.push((name, action));
        }
        Ok(state.success)
    }
}

/// Material and scored tasks for one adaptation target in one run.
struct Plan<'c> {
    /// The target website; `None` when the whole domain is the target.
    site: Option<&'c SiteSpec>,
    domain_id: String,
    /// Selected tasks in draw order; never scored.
    material: Vec<Task>,
    scored: Vec<(&'c SiteSpec, Task)>,
}

fn plan_run<'c>(
    bank: &DemoBank<'c>,
    split: &SplitSpec,
    which: SplitName,
    run_seed: u64,
    n_material: usize,
) -> Result<Vec<Plan<'c>>, EvalError> {
    let corpus = bank.corpus();
    let index = corpus.index();
    let in_split: BTreeSet<&str> = split.tasks(which).iter().map(String::as_str).collect();
    let mut groups: BTreeMap<String, Vec<&'c SiteSpec>> = BTreeMap::new();
    for id in &in_split {
        let (site, _) = index
            .task(id)
            .ok_or_else(|| EvalError::InvalidSplit(format!("unknown task {id}")))?;
        let key = match which {
            SplitName::CrossDomain => &site.domain_id,
            _ => &site.site_id,
        };
        let sites = groups.entry(key.clone()).or_default();
        if !sites.iter().any(|s| s.site_id == site.site_id) {
            sites.push(site);
        }
    }
    let train: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
    let mut plans = Vec::new();
    for (key, mut sites) in groups {
        sites.sort_by(|a, b| a.site_id.cmp(&b.site_id));
        let tasks = || sites.iter().flat_map(|s| s.tasks.iter());
        let mut order: Vec<&Task> = match which {
            SplitName::CrossTask => tasks().filter(|t| train.contains(t.task_id.as_str())).collect(),
            _ => tasks().filter(|t| in_split.contains(t.task_id.as_str())).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, &["select", &key]));
        order.shuffle(&mut rng);
        let material: Vec<Task> = order.iter().take(n_material).map(|t| (*t).clone()).collect();
        let chosen: BTreeSet<&str> = material.iter().map(|t| t.task_id.as_str()).collect();
        let scored: Vec<(&SiteSpec, Task)> = sites
            .iter()
            .flat_map(|s| s.tasks.iter().map(move |t| (*s, t)))
            .filter(|(_, t)| in_split.contains(t.task_id.as_str()) && !chosen.contains(t.task_id.as_str()))
            .map(|(s, t)| (s, t.clone()))
            .collect();
        if scored.is_empty() {
            continue;
        }
        plans.push(Plan {
            site: (which != SplitName::CrossDomain).then(|| sites[0]),
            domain_id: sites[0].domain_id.clone(),
            material,
            scored,
        });
    }
    Ok(plans)
}

/// In-context demonstrations for a plan: its selected tasks first, then
/// (for a website target) other websites' tasks from the same domain in
/// seeded order.
fn icl_demos(bank: &DemoBank<'_>, plan: &Plan<'_>, n: usize, k: usize, run_seed: u64) -> Result<Vec<Demo>, EvalError> {
    let corpus = bank.corpus();
    let mut tasks: Vec<&Task> = plan.material.iter().collect();
    if let (Some(target), true) = (plan.site, tasks.len() < n) {
        let mut extra: Vec<&Task> = corpus
            .sites()
            .filter(|s| s.domain_id == plan.domain_id && s.site_id != target.site_id)
            .flat_map(|s| s.tasks.iter())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, &["demos", &target.site_id]));
        extra.shuffle(&mut rng);
        tasks.extend(extra);
    }
    tasks
        .into_iter()
        .take(n)
        .map(|t| {
            let site = corpus.site(&t.site_id).expect("corpus task");
            let traj = bank.trajectory(t)?;
            Ok(deconstruct_demo(site, t, &traj, k)?)
        })
        .collect()
}

/// Runs `arm` on split `which`, `config.n_runs` times with different task
/// selections, and aggregates.
pub fn run_protocol(
    arm: Arm,
    model: AgentModel<'_>,
    bank: &DemoBank<'_>,
    split: &SplitSpec,
    which: SplitName,
    config: &ProtocolConfig,
) -> Result<AggregateReport, EvalError> {
    match (arm.is_policy(), model) {
        (true, AgentModel::Policy(_)) | (false, AgentModel::Client(_)) => {}
        _ => return Err(EvalError::ArmMismatch(arm.as_str().to_owned())),
    }
    if config.n_runs == 0 {
        return Err(EvalError::InvalidConfig("n_runs must be at least 1".into()));
    }
    let thresholds = config
        .visual_thresholds
        .unwrap_or_else(|| VisualThresholds::from_corpus(bank.corpus()));
    let ctx = EvalContext { bank, config, thresholds };
    let parallel = config.parallel
        && match model {
            AgentModel::Policy(_) => true,
            AgentModel::Client(c) => c.is_concurrent(),
        };
    let n_demos = match arm {
        Arm::SeeactMock => 0,
        _ => config.n_demos,
    };

    // Domain targets draw their in-context demonstrations as well.
    let n_material = match which {
        SplitName::CrossDomain => config.n_adapt_tasks.max(config.n_demos),
        _ => config.n_adapt_tasks,
    };

    let mut runs = Vec::with_capacity(config.n_runs);
    let mut tasks = Vec::new();
    let mut per_run_reports = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs {
        let run_seed = derive_seed(config.seed, &["run", &run.to_string()]);
        let plans = plan_run(bank, split, which, run_seed, n_material)?;
        let eval_site = |plan: &Plan<'_>| -> Result<Vec<TaskReport>, EvalError> {
            let agent = match model {
                AgentModel::Policy(params) if arm == Arm::PolicyFomamlAdapted => SiteAgent::Policy(adapt_to_target(
                    params,
                    &plan.material[..config.n_adapt_tasks.min(plan.material.len())],
                    bank,
                    config.alpha,
                    config.inner_steps,
                )?),
                AgentModel::Policy(params) => SiteAgent::Policy(params.clone()),
                AgentModel::Client(client) => {
                    let demos = icl_demos(bank, plan, n_demos, config.k, run_seed)?;
                    SiteAgent::Icl {
                        client,
                        prompt: build_prompt(BASE_PROMPT, &demos, n_demos, bank.modality())?,
                    }
                }
            };
            plan.scored.iter().map(|(site, t)| ctx.evaluate_task(&agent, site, t)).collect()
        };
        let site_reports: Vec<Vec<TaskReport>> = if parallel {
            plans.par_iter().map(eval_site).collect::<Result<_, _>>()?
        } else {
            plans.iter().map(eval_site).collect::<Result<_, _>>()?
        };
        let reports: Vec<TaskReport> = site_reports.into_iter().flatten().collect();
        runs.push(compute_metrics(&reports, config.mode)?);
        tasks.extend(reports.iter().cloned().map(|report| RunTaskReport { run, report }));
        per_run_reports.push(reports);
    }

    let mut strata = Strata::default();
    for d in Difficulty::ALL {
        let by = |f: fn(&DifficultyLabel) -> Difficulty| -> Option<MetricsSummary> {
            let per_run: Vec<Metrics> = per_run_reports
                .iter()
                .filter_map(|reports| {
                    let subset: Vec<TaskReport> = reports.iter().filter(|r| f(&r.difficulty) == d).cloned().collect();
                    compute_metrics(&subset, config.mode).ok()
                })
                .collect();
            MetricsSummary::of(&per_run)
        };
        strata.sequence.set(d, by(|l| l.sequence));
        strata.visual.set(d, by(|l| l.visual));
    }
    Ok(AggregateReport {
        arm,
        split: which,
        n_runs: config.n_runs,
        mode: config.mode,
        modality: bank.modality(),
        metrics: MetricsSummary::of(&runs).expect("at least one run"),
        strata,
        runs,
        tasks,
    })
}
