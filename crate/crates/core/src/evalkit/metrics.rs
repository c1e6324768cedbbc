//! Step- and task-level metrics.
//!
//! Op F1 compares value unigrams when the operations agree and is zero
//! otherwise; two empty values agree fully. Step-level metrics are averaged
//! within each task, then over tasks, so that Overall SR ≤ Step SR ≤
//! Ele. Acc holds on every report set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stratify::DifficultyLabel;
use super::EvalError;
use crate::text::unigrams;
use crate::webenv::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EvalMode {
    Trajectory,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    /// `None` when the agent gave no usable action.
    pub pred: Option<Action>,
    pub gold: Action,
    pub element_correct: bool,
    pub op_f1: f64,
    pub step_correct: bool,
}

impl StepRecord {
    pub fn score(step_index: usize, pred: Option<Action>, gold: Action) -> StepRecord {
        let element_correct = pred.as_ref().is_some_and(|p| p.element_id == gold.element_id);
        let op_f1 = operation_f1(pred.as_ref(), &gold);
        let step_correct = pred.as_ref().is_some_and(|p| step_matches(p, &gold));
        StepRecord {
            step_index,
            pred,
            gold,
            element_correct,
            op_f1,
            step_correct,
        }
    }
}

/// Element, operation and (when the operation takes one) value all match.
pub fn step_matches(pred: &Action, gold: &Action) -> bool {
    pred.element_id == gold.element_id
        && pred.operation == gold.operation
        && (!gold.operation.requires_value() || pred.value == gold.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub site_id: String,
    pub domain_id: String,
    pub steps: Vec<StepRecord>,
    pub overall_success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub live_success: Option<bool>,
    pub difficulty: DifficultyLabel,
}

impl TaskReport {
    pub fn new(
        task_id: impl Into<String>,
        site_id: impl Into<String>,
        domain_id: impl Into<String>,
        steps: Vec<StepRecord>,
        difficulty: DifficultyLabel,
    ) -> TaskReport {
        let overall_success = !steps.is_empty() && steps.iter().all(|s| s.step_correct);
        TaskReport {
            task_id: task_id.into(),
            site_id: site_id.into(),
            domain_id: domain_id.into(),
            steps,
            overall_success,
            live_success: None,
            difficulty,
        }
    }
}

fn value_counts(action: &Action) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for w in action.value.as_deref().map(unigrams).unwrap_or_default() {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Token F1 between the value unigrams of `pred` and `gold`; 0 when the
/// operations differ or there is no prediction.
pub fn operation_f1(pred: Option<&Action>, gold: &Action) -> f64 {
    let Some(pred) = pred else { return 0.0 };
    if pred.operation != gold.operation {
        return 0.0;
    }
    let p = value_counts(pred);
    let g = value_counts(gold);
    let (np, ng): (usize, usize) = (p.values().sum(), g.values().sum());
    if np == 0 && ng == 0 {
        return 1.0;
    }
    let common: usize = p.iter().map(|(w, c)| (*c).min(*g.get(w).unwrap_or(&0))).sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / np as f64;
    let recall = common as f64 / ng as f64;
    2.0 * precision * recall / (precision + recall)
}

fn task_macro_mean(reports: &[TaskReport], f: impl Fn(&StepRecord) -> f64) -> Result<f64, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut total = 0.0;
    for r in reports {
        if r.steps.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        total += r.steps.iter().map(&f).sum::<f64>() / r.steps.len() as f64;
    }
    Ok(total / reports.len() as f64)
}

pub fn element_accuracy(reports: &[TaskReport]) -> Result<f64, EvalError> {
    task_macro_mean(reports, |s| f64::from(u8::from(s.element_correct)))
}

pub fn mean_operation_f1(reports: &[TaskReport]) -> Result<f64, EvalError> {
    task_macro_mean(reports, |s| s.op_f1)
}

pub fn step_success_rate(reports: &[TaskReport]) -> Result<f64, EvalError> {
    task_macro_mean(reports, |s| f64::from(u8::from(s.step_correct)))
}

pub fn overall_success_rate(reports: &[TaskReport], mode: EvalMode) -> Result<f64, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut hits = 0usize;
    for r in reports {
        let ok = match mode {
            EvalMode::Trajectory => r.overall_success,
            EvalMode::Live => r.live_success.ok_or_else(|| EvalError::MissingLiveSignal(r.task_id.clone()))?,
        };
        hits += usize::from(ok);
    }
    Ok(hits as f64 / reports.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ele_acc: f64,
    pub op_f1: f64,
    pub step_sr: f64,
    pub overall_sr: f64,
}

pub fn compute_metrics(reports: &[TaskReport], mode: EvalMode) -> Result<Metrics, EvalError> {
    Ok(Metrics {
        ele_acc: element_accuracy(reports)?,
        op_f1: mean_operation_f1(reports)?,
        step_sr: step_success_rate(reports)?,
        overall_sr: overall_success_rate(reports, mode)?,
    })
}
