//! In-context demonstrations for prompt-driven agents.
//!
//! A recorded demonstration is cut into per-step segments (layout snapshot,
//! filtered candidates, the demonstrator's choice), rendered into a prompt,
//! and followed by the current step's observation. The client's free-text
//! reply is parsed back into an [`Action`].

mod client;
mod parse;
mod prompt;
mod simulated;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demostore::{self, TrajectoryRecord};
use crate::domkit::{rank_candidates, serialize_with_values, CandidateSet, ElementDescriptor};
use crate::layout::{annotate_marks, compute_layout, LayoutObservation, DEFAULT_VIEWPORT};
use crate::observation::Observation;
use crate::text::unigram_set;
use crate::webenv::{reset, step, Action, Corpus, Operation, SiteSpec, Task, Trajectory};

pub use client::{AgentClient, ClientError, MockClient, ScriptEntry};
pub use parse::{element_name, parse_action_response, render_action};
pub use prompt::{
    build_prompt, step_fields, Block, PromptBundle, QueryKey, BASE_PROMPT, DEMO_DESCRIPTION, DEMO_END, DEMO_INTRO,
    DEMO_STEPS,
};
pub use simulated::SimulatedClient;

pub const QUERY_TASK: &str = "Task:";
pub const QUERY_HISTORY: &str = "Previous actions:";
pub const QUERY_CANDIDATES: &str = "Candidate elements:";
pub const QUERY_CLOSING: &str = "Respond with ELEMENT, ACTION and VALUE for the next step.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IclError {
    #[error("{requested} demonstrations requested, {available} available")]
    NotEnoughDemos { requested: usize, available: usize },
    #[error("demonstration does not replay: {0}")]
    ReplayFailure(String),
    #[error("demonstration failed validation: {0}")]
    InvalidDemo(String),
    #[error("unparseable response: {0}")]
    UnparseableResponse(String),
    #[error("response names unknown element {0}")]
    UnknownElement(String),
    #[error("invalid operation {0}")]
    InvalidOperation(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSegment {
    pub layout: LayoutObservation,
    pub filtered_elements: CandidateSet,
    pub chosen_element_id: String,
    pub operation: Operation,
    pub value: Option<String>,
    /// The chosen element was ranked out and appended.
    pub forced_inclusion: bool,
}

impl DemoSegment {
    pub fn chosen(&self) -> Option<&ElementDescriptor> {
        self.filtered_elements
            .candidates
            .iter()
            .map(|c| &c.descriptor)
            .find(|d| d.element_id == self.chosen_element_id)
    }

    pub fn element_name(&self) -> String {
        self.chosen()
            .map(element_name)
            .unwrap_or_else(|| self.chosen_element_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub task_id: String,
    pub website: String,
    pub task_description: String,
    pub segments: Vec<DemoSegment>,
}

/// One segment per demonstration step: the top-`k` candidates for the
/// demo's instruction and the marked layout at the default viewport.
pub fn deconstruct_demo(site: &SiteSpec, task: &Task, trajectory: &Trajectory, k: usize) -> Result<Demo, IclError> {
    let fail = |e: &dyn std::fmt::Display| IclError::ReplayFailure(e.to_string());
    let mut state = reset(site, task).map_err(|e| fail(&e))?;
    let instruction = unigram_set(&task.instruction);
    let mut segments = Vec::with_capacity(trajectory.len());
    for s in &trajectory.steps {
        let page = site.page(&state.current_page_id).map_err(|e| fail(&e))?;
        let all = serialize_with_values(page, &state.form_values);
        let mut candidates = rank_candidates(&task.instruction, &all, k).map_err(|e| fail(&e))?;
        let forced = !candidates.contains(&s.action.element_id);
        if forced {
            let d = all
                .iter()
                .find(|d| d.element_id == s.action.element_id)
                .ok_or_else(|| IclError::ReplayFailure(format!("{} is not on {}", s.action.element_id, page.page_id)))?;
            candidates.candidates.push(crate::domkit::Candidate {
                score: crate::domkit::score_element(&instruction, d),
                descriptor: d.clone(),
            });
        }
        let layout = compute_layout(page, DEFAULT_VIEWPORT).map_err(|e| fail(&e))?;
        let layout = annotate_marks(&layout, &candidates).map_err(|e| fail(&e))?;
        segments.push(DemoSegment {
            layout,
            filtered_elements: candidates,
            chosen_element_id: s.action.element_id.clone(),
            operation: s.action.operation,
            value: s.action.value.clone(),
            forced_inclusion: forced,
        });
        state = step(&state, site, task, &s.action).map_err(|e| fail(&e))?;
    }
    Ok(Demo {
        task_id: task.task_id.clone(),
        website: site.site_id.clone(),
        task_description: task.instruction.clone(),
        segments,
    })
}

/// Validates `record` against the corpus, then deconstructs it.
pub fn deconstruct_record(record: &TrajectoryRecord, corpus: &Corpus, k: usize) -> Result<Demo, IclError> {
    let result = demostore::validate(record, corpus).map_err(|e| IclError::InvalidDemo(e.to_string()))?;
    if !result.is_ok() {
        return Err(IclError::InvalidDemo(result.failures.join("; ")));
    }
    let (site, task) = corpus
        .find_task(&record.task_id)
        .ok_or_else(|| IclError::InvalidDemo(format!("unknown task {}", record.task_id)))?;
    deconstruct_demo(site, task, &record.trajectory(), k)
}

/// The step being asked about: what the agent sees, without the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryStep<'a> {
    pub task_id: &'a str,
    pub step_index: usize,
    pub instruction: &'a str,
    pub observation: &'a Observation,
    /// Display names and actions taken so far.
    pub history: &'a [(String, Action)],
}

fn candidate_line(mark: usize, d: &ElementDescriptor) -> String {
    let mut line = format!("[{mark}] {} {}", d.element_id, element_name(d));
    for (k, v) in &d.attributes {
        line.push_str(&format!(" | {k}={v}"));
    }
    if !d.options.is_empty() {
        line.push_str(&format!(" | options: {}", d.options.join("; ")));
    }
    line
}

/// Appends the current step to `prompt`: the task, previous actions, the
/// screenshot slot and the marked candidate list.
pub fn query_prompt(prompt: &PromptBundle, current: &QueryStep<'_>) -> PromptBundle {
    let mut bundle = prompt.clone();
    let history = if current.history.is_empty() {
        "None".to_owned()
    } else {
        current
            .history
            .iter()
            .map(|(name, a)| format!("{name} -> {} {}", a.operation, a.value.as_deref().unwrap_or("None")))
            .collect::<Vec<_>>()
            .join("\n")
    };
    bundle.push_text(format!("{QUERY_TASK} {}\n\n{QUERY_HISTORY}\n{history}", current.instruction));
    bundle.push_image(&current.observation.layout);
    let lines: Vec<String> = current
        .observation
        .candidates
        .in_document_order()
        .into_iter()
        .enumerate()
        .map(|(i, d)| candidate_line(i + 1, d))
        .collect();
    bundle.push_text(format!("{QUERY_CANDIDATES}\n{}", lines.join("\n")));
    bundle.push_text(QUERY_CLOSING);
    bundle.query = Some(QueryKey {
        task_id: current.task_id.to_owned(),
        step_index: current.step_index,
    });
    bundle
}

/// Sends the prompt plus the current step to `client`; returns its reply
/// verbatim.
pub fn query_agent(client: &dyn AgentClient, prompt: &PromptBundle, current: &QueryStep<'_>) -> Result<String, IclError> {
    Ok(client.complete(&query_prompt(prompt, current))?)
}
