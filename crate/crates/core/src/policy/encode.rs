//! Turning observations into policy inputs.
//!
//! A candidate input is the 48 domkit features followed by the 6 layout
//! features (zeros in text-only mode); the instruction embedding is shared by
//! all candidates of a step. A value span input has the same 54-slot head
//! (span tag one-hot, coverage, start, length, span hash, the element's
//! layout) followed by a 64-slot context embedding of the element's tokens
//! and the span's neighbouring instruction words.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::domkit::{featurize_with, hash_tokens, Candidate, DEFAULT_K, FEATURE_DIM, TEXT_HASH_DIM};
use crate::layout::{layout_features, Viewport, LAYOUT_FEATURE_DIM};
use crate::observation::{observe, Modality, Observation, ObserveError};
use crate::text::{coverage, hashed_embedding, unigrams};
use crate::webenv::{reset, step, Action, EnvError, Operation, SiteSpec, Tag, Task, Trajectory};

pub const CANDIDATE_DIM: usize = FEATURE_DIM + LAYOUT_FEATURE_DIM;
pub const INSTRUCTION_DIM: usize = 64;
pub const INPUT_DIM: usize = CANDIDATE_DIM + INSTRUCTION_DIM;
pub(crate) const LAYOUT_SLOTS: std::ops::Range<usize> = FEATURE_DIM..CANDIDATE_DIM;

const MAX_SPAN: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
    #[error("gold element {0} is not on the page")]
    UnknownGold(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSpan {
    pub text: String,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateInput {
    pub element_id: String,
    pub tag: Tag,
    pub features: Vec<f64>,
    pub layout: [f64; LAYOUT_FEATURE_DIM],
    pub hash_tokens: Vec<String>,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    pub instruction: Vec<f64>,
    pub instruction_tokens: Vec<String>,
    pub candidates: Vec<CandidateInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepExample {
    pub task_id: String,
    pub step_index: usize,
    pub input: StepInput,
    pub gold_element: usize,
    pub gold_operation: Operation,
    /// Index into `gold_spans`; `None` for CLICK or when the gold value is
    /// not among the spans.
    pub gold_value: Option<usize>,
    pub gold_spans: Vec<ValueSpan>,
}

fn find_subsequence(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    (0..=haystack.len() - needle.len()).find(|&i| haystack[i..i + needle.len()] == *needle)
}

impl StepInput {
    fn span(&self, cand: &CandidateInput, text: String, start: Option<usize>, len: usize) -> ValueSpan {
        let words = unigrams(&text);
        let n = self.instruction_tokens.len().max(1) as f64;
        let instr: BTreeSet<String> = self.instruction_tokens.iter().cloned().collect();
        let mut f = vec![0.0; INPUT_DIM];
        f[cand.tag.index()] = 1.0;
        f[5] = coverage(&words.iter().cloned().collect(), &instr);
        f[6] = start.map_or(1.0, |s| s as f64 / n);
        f[7] = (len as f64 / MAX_SPAN as f64).min(1.0);
        f[8..8 + TEXT_HASH_DIM].copy_from_slice(&hashed_embedding(&words, TEXT_HASH_DIM));
        f[LAYOUT_SLOTS].copy_from_slice(&cand.layout);
        let mut context = cand.hash_tokens.clone();
        if let Some(s) = start {
            if s > 0 {
                context.push(format!("^{}", self.instruction_tokens[s - 1]));
            }
            if let Some(next) = self.instruction_tokens.get(s + len) {
                context.push(format!("${next}"));
            }
        }
        f[CANDIDATE_DIM..].copy_from_slice(&hashed_embedding(&context, INSTRUCTION_DIM));
        ValueSpan { text, features: f }
    }

    /// Value candidates for candidate `index`: instruction n-grams (n ≤ 5)
    /// for inputs, options for selects, nothing otherwise.
    pub fn value_spans(&self, index: usize) -> Vec<ValueSpan> {
        let cand = &self.candidates[index];
        let toks = &self.instruction_tokens;
        match cand.tag {
            Tag::Input => {
                let mut out = Vec::new();
                for len in 1..=MAX_SPAN.min(toks.len()) {
                    for start in 0..=toks.len() - len {
                        out.push(self.span(cand, toks[start..start + len].join(" "), Some(start), len));
                    }
                }
                out
            }
            Tag::Select => cand
                .options
                .iter()
                .map(|o| {
                    let words = unigrams(o);
                    let start = find_subsequence(toks, &words);
                    self.span(cand, o.clone(), start, words.len())
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

fn candidate_input(instr: &BTreeSet<String>, obs: &Observation, c: &Candidate, modality: Modality) -> CandidateInput {
    let d = &c.descriptor;
    let layout = match modality {
        Modality::Multimodal => layout_features(&obs.layout, &d.element_id).unwrap_or([0.0; LAYOUT_FEATURE_DIM]),
        Modality::TextOnly => [0.0; LAYOUT_FEATURE_DIM],
    };
    let mut features = featurize_with(instr, d).to_vec();
    features.extend_from_slice(&layout);
    CandidateInput {
        element_id: d.element_id.clone(),
        tag: d.tag,
        features,
        layout,
        hash_tokens: hash_tokens(d),
        options: d.options.clone(),
    }
}

pub fn encode_step(instruction: &str, obs: &Observation, modality: Modality) -> StepInput {
    let tokens = unigrams(instruction);
    let instr: BTreeSet<String> = tokens.iter().cloned().collect();
    StepInput {
        instruction: hashed_embedding(&tokens, INSTRUCTION_DIM),
        candidates: obs
            .candidates
            .candidates
            .iter()
            .map(|c| candidate_input(&instr, obs, c, modality))
            .collect(),
        instruction_tokens: tokens,
    }
}

/// Encodes one demonstration step. The gold element must be among the
/// observation's candidates.
pub fn encode_example(
    task_id: &str,
    step_index: usize,
    instruction: &str,
    obs: &Observation,
    gold: &Action,
    modality: Modality,
) -> Result<StepExample, EncodeError> {
    let input = encode_step(instruction, obs, modality);
    let gold_element = obs
        .candidates
        .position(&gold.element_id)
        .ok_or_else(|| EncodeError::UnknownGold(gold.element_id.clone()))?;
    let gold_spans = if gold.operation.requires_value() {
        input.value_spans(gold_element)
    } else {
        Vec::new()
    };
    let gold_value = gold
        .value
        .as_ref()
        .and_then(|v| {
            let want = unigrams(v).join(" ");
            gold_spans
                .iter()
                .position(|s| s.text == *v || unigrams(&s.text).join(" ") == want)
        });
    Ok(StepExample {
        task_id: task_id.to_owned(),
        step_index,
        input,
        gold_element,
        gold_operation: gold.operation,
        gold_value,
        gold_spans,
    })
}

/// Observation at each step of `trajectory` with the gold element forced
/// into the candidate list when the ranker dropped it.
pub fn demo_observations(
    site: &SiteSpec,
    task: &Task,
    trajectory: &Trajectory,
    k: usize,
    viewport: Viewport,
) -> Result<Vec<Observation>, EncodeError> {
    let mut state = reset(site, task)?;
    let mut out = Vec::with_capacity(trajectory.len());
    for s in &trajectory.steps {
        let mut obs = observe(site, &state, &task.instruction, k, viewport)?;
        if !obs.candidates.contains(&s.action.element_id) {
            let page = site.page(&state.current_page_id)?;
            let all = crate::domkit::serialize_with_values(page, &state.form_values);
            let d = all
                .into_iter()
                .find(|d| d.element_id == s.action.element_id)
                .ok_or_else(|| EncodeError::UnknownGold(s.action.element_id.clone()))?;
            let score = crate::domkit::score_element(&crate::text::unigram_set(&task.instruction), &d);
            obs.candidates.candidates.push(Candidate { descriptor: d, score });
            obs.layout = crate::layout::annotate_marks(
                &crate::layout::compute_layout(page, viewport).map_err(ObserveError::from)?,
                &obs.candidates,
            )
            .map_err(ObserveError::from)?;
        }
        out.push(obs);
        state = step(&state, site, task, &s.action)?;
    }
    Ok(out)
}

/// Training examples for every step of a demonstration.
pub fn demo_examples(
    site: &SiteSpec,
    task: &Task,
    trajectory: &Trajectory,
    modality: Modality,
    k: usize,
    viewport: Viewport,
) -> Result<Vec<StepExample>, EncodeError> {
    let observations = demo_observations(site, task, trajectory, k, viewport)?;
    observations
        .iter()
        .zip(&trajectory.steps)
        .enumerate()
        .map(|(i, (obs, s))| encode_example(&task.task_id, i, &task.instruction, obs, &s.action, modality))
        .collect()
}

/// Examples for the oracle demonstration of `task` at default settings.
pub fn oracle_examples(site: &SiteSpec, task: &Task, modality: Modality) -> Result<Vec<StepExample>, EncodeError> {
    let traj = crate::webenv::oracle_trajectory(site, task)?;
    demo_examples(site, task, &traj, modality, DEFAULT_K, crate::layout::DEFAULT_VIEWPORT)
}
