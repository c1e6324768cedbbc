//! Agent clients: anything that maps a prompt to response text.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::PromptBundle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("bad script: {0}")]
    BadScript(String),
}

pub trait AgentClient: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, ClientError>;

    /// Whether replies are independent of call order, so steps of
    /// different tasks may be asked concurrently.
    fn is_concurrent(&self) -> bool {
        true
    }
}

/// One scripted response. Keyed entries answer only the step they name;
/// unkeyed entries are served in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
    pub response: String,
}

impl ScriptEntry {
    pub fn unkeyed(response: impl Into<String>) -> Self {
        ScriptEntry {
            task_id: None,
            step_index: None,
            response: response.into(),
        }
    }

    pub fn keyed(task_id: impl Into<String>, step_index: usize, response: impl Into<String>) -> Self {
        ScriptEntry {
            task_id: Some(task_id.into()),
            step_index: Some(step_index),
            response: response.into(),
        }
    }
}

/// Replays scripted responses.
#[derive(Debug)]
pub struct MockClient {
    keyed: HashMap<(String, usize), String>,
    sequence: Vec<String>,
    cyclic: bool,
    cursor: AtomicUsize,
}

impl MockClient {
    pub fn new(entries: Vec<ScriptEntry>, cyclic: bool) -> Self {
        let mut keyed = HashMap::new();
        let mut sequence = Vec::new();
        for e in entries {
            match (e.task_id, e.step_index) {
                (Some(t), Some(s)) => {
                    keyed.insert((t, s), e.response);
                }
                _ => sequence.push(e.response),
            }
        }
        MockClient {
            keyed,
            sequence,
            cyclic,
            cursor: AtomicUsize::new(0),
        }
    }

    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>, cyclic: bool) -> Self {
        Self::new(responses.into_iter().map(ScriptEntry::unkeyed).collect(), cyclic)
    }

    /// Line-delimited JSON: each non-blank line is either a string or a
    /// [`ScriptEntry`] object.
    pub fn parse_script(text: &str, cyclic: bool) -> Result<Self, ClientError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| ClientError::BadScript(format!("line {}: {e}", i + 1)))?;
            let entry = match value {
                serde_json::Value::String(s) => ScriptEntry::unkeyed(s),
                other => serde_json::from_value(other)
                    .map_err(|e| ClientError::BadScript(format!("line {}: {e}", i + 1)))?,
            };
            entries.push(entry);
        }
        Ok(Self::new(entries, cyclic))
    }

    pub fn load_script(path: &Path, cyclic: bool) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::BadScript(format!("{}: {e}", path.display())))?;
        Self::parse_script(&text, cyclic)
    }

    pub fn to_script(entries: &[ScriptEntry]) -> String {
        entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }
}

impl AgentClient for MockClient {
    fn is_concurrent(&self) -> bool {
        self.sequence.is_empty()
    }

    fn complete(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        if let Some(q) = &prompt.query {
            if let Some(r) = self.keyed.get(&(q.task_id.clone(), q.step_index)) {
                return Ok(r.clone());
            }
        }
        if self.sequence.is_empty() {
            return Err(ClientError::ScriptExhausted(0));
        }
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        if self.cyclic {
            Ok(self.sequence[i % self.sequence.len()].clone())
        } else {
            self.sequence
                .get(i)
                .cloned()
                .ok_or(ClientError::ScriptExhausted(self.sequence.len()))
        }
    }
}
