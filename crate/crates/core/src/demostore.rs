//! Demonstration files.
//!
//! A record stores the action sequence plus, per step, digests of what the
//! demonstrator saw (the marked layout and the candidate set). Observations
//! are recomputed from the corpus on replay and checked against the digests.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domkit::DEFAULT_K;
use crate::layout::DEFAULT_VIEWPORT;
use crate::observation::{observe, Observation};
use crate::text::fnv1a64;
use crate::webenv::{reset, step, Action, Corpus, EnvState, SiteSpec, Task, Trajectory, TrajectoryStep, STEP_CAP};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEMO_EXTENSION: &str = "demo.json";
/// Timestamp written on generated (oracle) records so they serialize
/// identically across runs.
pub const ORACLE_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("schema version {found}, expected {expected}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("cannot record: {0}")]
    Replay(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Annotator {
    Human,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordStep {
    pub page_id: String,
    pub layout_digest: String,
    pub candidates_digest: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub schema_version: u32,
    pub task_id: String,
    pub site_id: String,
    pub annotator: Annotator,
    pub created_at: String,
    pub steps: Vec<RecordStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationResult {
    pub failures: Vec<String>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn digest_hex(json: &str) -> String {
    format!("{:016x}", fnv1a64(json.as_bytes()))
}

/// Digests of one step's observation: `(layout, candidates)`.
pub fn observation_digests(obs: &Observation, task_id: &str, step_index: usize) -> (String, String) {
    let layout = serde_json::to_string(&obs.layout).expect("layout serializes");
    let candidates = serde_json::to_string(&obs.candidates.clone().with_context(task_id, step_index))
        .expect("candidates serialize");
    (digest_hex(&layout), digest_hex(&candidates))
}

fn observe_default(site: &SiteSpec, state: &EnvState, task: &Task) -> Result<Observation, String> {
    observe(site, state, &task.instruction, DEFAULT_K, DEFAULT_VIEWPORT).map_err(|e| e.to_string())
}

impl TrajectoryRecord {
    /// Builds a record by replaying `actions`, computing digests at every
    /// step.
    pub fn from_actions<'a>(
        site: &SiteSpec,
        task: &Task,
        actions: impl IntoIterator<Item = &'a Action>,
        annotator: Annotator,
        created_at: impl Into<String>,
    ) -> Result<TrajectoryRecord, StoreError> {
        let mut state = reset(site, task).map_err(|e| StoreError::Replay(e.to_string()))?;
        let mut steps = Vec::new();
        for (i, action) in actions.into_iter().enumerate() {
            let obs = observe_default(site, &state, task).map_err(StoreError::Replay)?;
            let (layout_digest, candidates_digest) = observation_digests(&obs, &task.task_id, i);
            steps.push(RecordStep {
                page_id: state.current_page_id.clone(),
                layout_digest,
                candidates_digest,
                action: action.clone(),
            });
            state = step(&state, site, task, action).map_err(|e| StoreError::Replay(e.to_string()))?;
        }
        Ok(TrajectoryRecord {
            schema_version: SCHEMA_VERSION,
            task_id: task.task_id.clone(),
            site_id: site.site_id.clone(),
            annotator,
            created_at: created_at.into(),
            steps,
        })
    }

    pub fn from_oracle(site: &SiteSpec, task: &Task) -> Result<TrajectoryRecord, StoreError> {
        let traj = crate::webenv::oracle_trajectory(site, task).map_err(|e| StoreError::Replay(e.to_string()))?;
        Self::from_actions(site, task, traj.actions(), Annotator::Oracle, ORACLE_TIMESTAMP)
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            task_id: self.task_id.clone(),
            site_id: self.site_id.clone(),
            steps: self
                .steps
                .iter()
                .map(|s| TrajectoryStep {
                    page_id: s.page_id.clone(),
                    action: s.action.clone(),
                })
                .collect(),
        }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<TrajectoryRecord, StoreError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| StoreError::Malformed(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| StoreError::Malformed("missing schema_version".into()))?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(StoreError::SchemaMismatch {
                expected: SCHEMA_VERSION,
                found: u32::try_from(found).unwrap_or(u32::MAX),
            });
        }
        serde_json::from_value(value).map_err(|e| StoreError::Malformed(e.to_string()))
    }
}

/// Atomically writes `record` to `path` (temp file in the same directory,
/// then rename).
pub fn save(record: &TrajectoryRecord, path: &Path) -> Result<(), StoreError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| StoreError::Malformed(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(record.to_canonical_json().as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrajectoryRecord, StoreError> {
    TrajectoryRecord::from_json(&fs::read_to_string(path)?)
}

/// Replays the record against the corpus: every action must apply, every
/// digest must match, and the final state must be a success within the
/// step cap.
pub fn validate(record: &TrajectoryRecord, corpus: &Corpus) -> Result<ValidationResult, StoreError> {
    let site = corpus
        .site(&record.site_id)
        .ok_or_else(|| StoreError::UnknownSite(record.site_id.clone()))?;
    let mut result = ValidationResult::default();
    let Some(task) = site.task(&record.task_id) else {
        result.failures.push(format!("task {} is not on site {}", record.task_id, record.site_id));
        return Ok(result);
    };
    if record.schema_version != SCHEMA_VERSION {
        result.failures.push(format!("schema version {}", record.schema_version));
    }
    if record.steps.is_empty() {
        result.failures.push("no steps".into());
    }
    if record.steps.len() > STEP_CAP as usize {
        result.failures.push(format!("{} steps exceed the cap of {STEP_CAP}", record.steps.len()));
    }
    let mut state = match reset(site, task) {
        Ok(s) => s,
        Err(e) => {
            result.failures.push(e.to_string());
            return Ok(result);
        }
    };
    for (i, s) in record.steps.iter().enumerate() {
        if state.current_page_id != s.page_id {
            result.failures.push(format!("step {i}: on page {}, record says {}", state.current_page_id, s.page_id));
        }
        match observe_default(site, &state, task) {
            Ok(obs) => {
                let (layout, candidates) = observation_digests(&obs, &task.task_id, i);
                if layout != s.layout_digest {
                    result.failures.push(format!("step {i}: layout digest mismatch"));
                }
                if candidates != s.candidates_digest {
                    result.failures.push(format!("step {i}: candidate digest mismatch"));
                }
            }
            Err(e) => result.failures.push(format!("step {i}: {e}")),
        }
        match step(&state, site, task, &s.action) {
            Ok(next) => state = next,
            Err(e) => {
                result.failures.push(format!("step {i}: {e}"));
                return Ok(result);
            }
        }
    }
    if !state.success {
        result.failures.push("replay does not reach the goal".into());
    }
    Ok(result)
}
