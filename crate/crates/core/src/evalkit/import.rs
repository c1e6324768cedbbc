//! Reading tasks and trajectories from files.
//!
//! NATIVE is this crate's own export: `{"tasks": [...], "records": [...]}`.
//! MIND2WEB_JSON is a list of annotated tasks in the public benchmark's
//! layout (`confirmed_task`, `website`, `domain`, and `actions` with an
//! `operation` of `op`/`value` and positive candidates). Imported external
//! tasks have no site model, so their goals and digests are empty.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::demostore::{Annotator, RecordStep, TrajectoryRecord, ORACLE_TIMESTAMP, SCHEMA_VERSION};
use crate::webenv::{Action, GoalPredicate, Operation, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ImportFormat {
    Native,
    Mind2webJson,
}

impl fmt::Display for ImportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImportFormat::Native => "NATIVE",
            ImportFormat::Mind2webJson => "MIND2WEB_JSON",
        })
    }
}

impl FromStr for ImportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "native" => Ok(ImportFormat::Native),
            "mind2web_json" | "mind2web" => Ok(ImportFormat::Mind2webJson),
            other => Err(format!("unknown import format {other:?} (expected native or mind2web_json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Imported {
    pub tasks: Vec<Task>,
    pub records: Vec<TrajectoryRecord>,
    /// Entries that could not be mapped and were skipped.
    pub skipped: usize,
}

pub fn export_native(tasks: &[Task], records: &[TrajectoryRecord]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "tasks": tasks, "records": records })).expect("serializes")
}

fn import_native(root: Value) -> Result<Imported, EvalError> {
    let Value::Object(mut map) = root else {
        return Err(EvalError::MalformedFile("expected an object with tasks and records".into()));
    };
    let mut out = Imported::default();
    let take = |map: &mut serde_json::Map<String, Value>, key: &str| match map.remove(key) {
        Some(Value::Array(items)) => Ok(items),
        None => Ok(Vec::new()),
        Some(_) => Err(EvalError::MalformedFile(format!("{key} is not a list"))),
    };
    for item in take(&mut map, "tasks")? {
        match serde_json::from_value::<Task>(item) {
            Ok(t) => out.tasks.push(t),
            Err(_) => out.skipped += 1,
        }
    }
    for item in take(&mut map, "records")? {
        match serde_json::from_value::<TrajectoryRecord>(item) {
            Ok(r) if r.schema_version == SCHEMA_VERSION => out.records.push(r),
            _ => out.skipped += 1,
        }
    }
    Ok(out)
}

fn mind2web_action(entry: &Value) -> Option<Action> {
    let op = entry.get("operation")?;
    let operation = Operation::parse(op.get("op")?.as_str()?)?;
    let element_id = entry
        .get("pos_candidates")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .and_then(|c| c.get("backend_node_id"))
        .and_then(Value::as_str)
        .or_else(|| entry.get("action_uid").and_then(Value::as_str))?
        .to_owned();
    let value = op
        .get("value")
        .and_then(Value::as_str)
        .filter(|v| !v.is_empty() && operation.requires_value())
        .map(str::to_owned);
    if operation.requires_value() && value.is_none() {
        return None;
    }
    Some(Action {
        element_id,
        operation,
        value,
    })
}

fn mind2web_task(index: usize, item: &Value) -> Option<(Task, TrajectoryRecord)> {
    let text = |key: &str| item.get(key).and_then(Value::as_str).map(str::to_owned);
    let instruction = text("confirmed_task")?;
    let site_id = text("website")?;
    let domain_id = text("domain").unwrap_or_default();
    let task_id = text("annotation_id").unwrap_or_else(|| format!("mind2web-{index:05}"));
    let actions: Vec<Action> = item
        .get("actions")?
        .as_array()?
        .iter()
        .map(mind2web_action)
        .collect::<Option<_>>()?;
    if actions.is_empty() {
        return None;
    }
    let task = Task {
        task_id: task_id.clone(),
        instruction,
        site_id: site_id.clone(),
        domain_id,
        goal: GoalPredicate {
            page_id: String::new(),
            required_values: Default::default(),
        },
        oracle_len: u32::try_from(actions.len()).ok()?,
    };
    let record = TrajectoryRecord {
        schema_version: SCHEMA_VERSION,
        task_id,
        site_id,
        annotator: Annotator::Human,
        created_at: ORACLE_TIMESTAMP.to_owned(),
        steps: actions
            .into_iter()
            .map(|action| RecordStep {
                page_id: String::new(),
                layout_digest: String::new(),
                candidates_digest: String::new(),
                action,
            })
            .collect(),
    };
    Some((task, record))
}

fn import_mind2web(root: Value) -> Result<Imported, EvalError> {
    let Value::Array(items) = root else {
        return Err(EvalError::MalformedFile("expected a list of tasks".into()));
    };
    let mut out = Imported::default();
    for (i, item) in items.iter().enumerate() {
        match mind2web_task(i, item) {
            Some((t, r)) => {
                out.tasks.push(t);
                out.records.push(r);
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

pub fn import_str(text: &str, format: ImportFormat) -> Result<Imported, EvalError> {
    let root: Value = serde_json::from_str(text).map_err(|e| EvalError::MalformedFile(e.to_string()))?;
    match format {
        ImportFormat::Native => import_native(root),
        ImportFormat::Mind2webJson => import_mind2web(root),
    }
}

pub fn import_records(path: &Path, format: ImportFormat) -> Result<Imported, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::MalformedFile(format!("{}: {e}", path.display())))?;
    import_str(&text, format)
}
