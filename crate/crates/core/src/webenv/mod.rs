//! Synthetic website environments.
//!
//! A [`SiteSpec`] is a small deterministic state machine: pages hold ordered
//! interactive elements, links and buttons move between pages, inputs and
//! selects write form values. A [`Task`] pairs an instruction with a
//! declarative goal (a page plus required form values) so success can be
//! judged from environment state alone.
//!
//! All functions here are pure; states and specs are plain values.

mod corpus;
mod vocab;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{generate_corpus, generate_corpus_with, CorpusProfile};

/// Episode horizon.
pub const STEP_CAP: u32 = 30;

/// Every site starts on this page.
pub const START_PAGE: &str = "home";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("task {task_id} belongs to site {task_site}, not {site_id}")]
    TaskSiteMismatch {
        task_id: String,
        task_site: String,
        site_id: String,
    },
    #[error("element {0} is not on the current page")]
    InvalidElement(String),
    #[error("{operation} is not applicable to element {element_id}: {reason}")]
    InvalidOperation {
        element_id: String,
        operation: Operation,
        reason: String,
    },
    #[error("episode already terminated")]
    AlreadyTerminated,
    #[error("no action sequence reaches the goal of task {0}")]
    NoPath(String),
    #[error("page {0} does not exist")]
    UnknownPage(String),
}

impl EnvError {
    /// Stable variant name, used by the recorder API.
    pub fn name(&self) -> &'static str {
        match self {
            EnvError::TaskSiteMismatch { .. } => "TaskSiteMismatch",
            EnvError::InvalidElement(_) => "InvalidElement",
            EnvError::InvalidOperation { .. } => "InvalidOperation",
            EnvError::AlreadyTerminated => "AlreadyTerminated",
            EnvError::NoPath(_) => "NoPath",
            EnvError::UnknownPage(_) => "UnknownPage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Button,
    Link,
    Input,
    Select,
    Text,
}

impl Tag {
    pub const ALL: [Tag; 5] = [Tag::Button, Tag::Link, Tag::Input, Tag::Select, Tag::Text];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Button => "button",
            Tag::Link => "link",
            Tag::Input => "input",
            Tag::Select => "select",
            Tag::Text => "text",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Operation {
    Click,
    Type,
    Select,
}

impl Operation {
    pub const ALL: [Operation; 3] = [Operation::Click, Operation::Type, Operation::Select];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn requires_value(self) -> bool {
        !matches!(self, Operation::Click)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Click => "CLICK",
            Operation::Type => "TYPE",
            Operation::Select => "SELECT",
        }
    }

    pub fn parse(s: &str) -> Option<Operation> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CLICK" => Some(Operation::Click),
            "TYPE" => Some(Operation::Type),
            "SELECT" => Some(Operation::Select),
            _ => None,
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub element_id: String,
    pub operation: Operation,
    #[serde(default)]
    pub value: Option<String>,
}

impl Action {
    pub fn click(element_id: impl Into<String>) -> Self {
        Action {
            element_id: element_id.into(),
            operation: Operation::Click,
            value: None,
        }
    }

    pub fn type_text(element_id: impl Into<String>, value: impl Into<String>) -> Self {
        Action {
            element_id: element_id.into(),
            operation: Operation::Type,
            value: Some(value.into()),
        }
    }

    pub fn select(element_id: impl Into<String>, value: impl Into<String>) -> Self {
        Action {
            element_id: element_id.into(),
            operation: Operation::Select,
            value: Some(value.into()),
        }
    }

    /// Value is present iff the operation needs one.
    pub fn is_well_formed(&self) -> bool {
        self.operation.requires_value() == self.value.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvElement {
    pub element_id: String,
    pub tag: Tag,
    pub label: String,
    /// Destination page for links and buttons; `None` for inert buttons.
    pub target: Option<String>,
    /// Options of a select element.
    pub options: Vec<String>,
    pub depth: u32,
    pub attributes: BTreeMap<String, String>,
    /// Present in the document but not rendered (collapsed menus and the
    /// like). Hidden elements are not interactable.
    pub hidden: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSpec {
    pub page_id: String,
    pub elements: Vec<EnvElement>,
}

impl PageSpec {
    pub fn element(&self, element_id: &str) -> Option<&EnvElement> {
        self.elements.iter().find(|e| e.element_id == element_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalPredicate {
    pub page_id: String,
    pub required_values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub instruction: String,
    pub site_id: String,
    pub domain_id: String,
    pub goal: GoalPredicate,
    pub oracle_len: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub site_id: String,
    pub domain_id: String,
    pub pages: BTreeMap<String, PageSpec>,
    pub tasks: Vec<Task>,
    pub seed: u64,
}

impl SiteSpec {
    pub fn page(&self, page_id: &str) -> Result<&PageSpec, EnvError> {
        self.pages
            .get(page_id)
            .ok_or_else(|| EnvError::UnknownPage(page_id.to_owned()))
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Structural invariants: unique ids, resolvable targets, non-empty
    /// selects, and tasks whose oracle path matches `oracle_len`.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.pages.contains_key(START_PAGE) {
            return Err(format!("{}: missing start page", self.site_id));
        }
        for (key, page) in &self.pages {
            if key != &page.page_id {
                return Err(format!("{}: page key {key} != id {}", self.site_id, page.page_id));
            }
            let mut seen = std::collections::BTreeSet::new();
            for el in &page.elements {
                if !seen.insert(el.element_id.as_str()) {
                    return Err(format!("{}: duplicate element {}", page.page_id, el.element_id));
                }
                if let Some(target) = &el.target {
                    if !self.pages.contains_key(target) {
                        return Err(format!("{}: dangling target {target}", el.element_id));
                    }
                }
                if el.tag == Tag::Select && el.options.is_empty() {
                    return Err(format!("{}: select without options", el.element_id));
                }
            }
        }
        for task in &self.tasks {
            if task.instruction.trim().is_empty() {
                return Err(format!("{}: empty instruction", task.task_id));
            }
            let traj = oracle_trajectory(self, task).map_err(|e| e.to_string())?;
            if traj.steps.len() as u32 != task.oracle_len || task.oracle_len > STEP_CAP {
                return Err(format!(
                    "{}: oracle length {} vs declared {}",
                    task.task_id,
                    traj.steps.len(),
                    task.oracle_len
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGroup {
    pub domain_id: String,
    pub sites: Vec<SiteSpec>,
}

/// A generated (or loaded) set of sites grouped by domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub domains: Vec<DomainGroup>,
}

impl Corpus {
    pub fn sites(&self) -> impl Iterator<Item = &SiteSpec> {
        self.domains.iter().flat_map(|d| d.sites.iter())
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.sites().flat_map(|s| s.tasks.iter())
    }

    pub fn site(&self, site_id: &str) -> Option<&SiteSpec> {
        self.sites().find(|s| s.site_id == site_id)
    }

    pub fn find_task(&self, task_id: &str) -> Option<(&SiteSpec, &Task)> {
        self.sites()
            .find_map(|s| s.task(task_id).map(|t| (s, t)))
    }

    /// Maps task ids to `(site, task)` for repeated lookups.
    pub fn index(&self) -> CorpusIndex<'_> {
        let mut tasks = HashMap::new();
        let mut sites = HashMap::new();
        for site in self.sites() {
            sites.insert(site.site_id.as_str(), site);
            for task in &site.tasks {
                tasks.insert(task.task_id.as_str(), (site, task));
            }
        }
        CorpusIndex { sites, tasks }
    }

    /// Same sites, keeping only tasks whose id satisfies `keep`; sites left
    /// without tasks are dropped, as are empty domains.
    pub fn restrict(&self, keep: impl Fn(&Task) -> bool) -> Corpus {
        let domains = self
            .domains
            .iter()
            .filter_map(|d| {
                let sites: Vec<SiteSpec> = d
                    .sites
                    .iter()
                    .filter_map(|s| {
                        let tasks: Vec<Task> = s.tasks.iter().filter(|t| keep(t)).cloned().collect();
                        (!tasks.is_empty()).then(|| SiteSpec {
                            tasks,
                            ..s.clone()
                        })
                    })
                    .collect();
                (!sites.is_empty()).then(|| DomainGroup {
                    domain_id: d.domain_id.clone(),
                    sites,
                })
            })
            .collect();
        Corpus {
            seed: self.seed,
            domains,
        }
    }

    /// Canonical JSON serialization (field order fixed by the types, maps
    /// ordered by key).
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("corpus serializes")
    }

    /// 64-bit FNV-1a of the canonical serialization.
    pub fn digest(&self) -> u64 {
        crate::text::fnv1a64(self.to_canonical_json().as_bytes())
    }
}

pub struct CorpusIndex<'a> {
    sites: HashMap<&'a str, &'a SiteSpec>,
    tasks: HashMap<&'a str, (&'a SiteSpec, &'a Task)>,
}

impl<'a> CorpusIndex<'a> {
    pub fn site(&self, site_id: &str) -> Option<&'a SiteSpec> {
        self.sites.get(site_id).copied()
    }

    pub fn task(&self, task_id: &str) -> Option<(&'a SiteSpec, &'a Task)> {
        self.tasks.get(task_id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub site_id: String,
    pub current_page_id: String,
    pub form_values: BTreeMap<String, String>,
    pub steps_taken: u32,
    pub terminated: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// Page the action was taken on.
    pub page_id: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub site_id: String,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }
}

pub fn reset(site: &SiteSpec, task: &Task) -> Result<EnvState, EnvError> {
    if task.site_id != site.site_id {
        return Err(EnvError::TaskSiteMismatch {
            task_id: task.task_id.clone(),
            task_site: task.site_id.clone(),
            site_id: site.site_id.clone(),
        });
    }
    site.page(START_PAGE)?;
    Ok(EnvState {
        site_id: site.site_id.clone(),
        current_page_id: START_PAGE.to_owned(),
        form_values: BTreeMap::new(),
        steps_taken: 0,
        terminated: false,
        success: false,
    })
}

pub fn goal_holds(goal: &GoalPredicate, state: &EnvState) -> bool {
    state.current_page_id == goal.page_id
        && goal
            .required_values
            .iter()
            .all(|(k, v)| state.form_values.get(k) == Some(v))
}

pub fn step(
    state: &EnvState,
    site: &SiteSpec,
    task: &Task,
    action: &Action,
) -> Result<EnvState, EnvError> {
    if state.terminated {
        return Err(EnvError::AlreadyTerminated);
    }
    if task.site_id != site.site_id || state.site_id != site.site_id {
        return Err(EnvError::TaskSiteMismatch {
            task_id: task.task_id.clone(),
            task_site: task.site_id.clone(),
            site_id: site.site_id.clone(),
        });
    }
    let page = site.page(&state.current_page_id)?;
    let element = page
        .element(&action.element_id)
        .ok_or_else(|| EnvError::InvalidElement(action.element_id.clone()))?;
    let invalid = |reason: &str| EnvError::InvalidOperation {
        element_id: element.element_id.clone(),
        operation: action.operation,
        reason: reason.to_owned(),
    };
    if element.hidden {
        return Err(invalid("element is hidden"));
    }

    let mut next = state.clone();
    match (action.operation, element.tag) {
        (Operation::Click, Tag::Link | Tag::Button) => {
            if let Some(target) = &element.target {
                site.page(target)?;
                next.current_page_id = target.clone();
            }
        }
        (Operation::Type, Tag::Input) => {
            let value = action.value.as_ref().ok_or_else(|| invalid("TYPE needs a value"))?;
            next.form_values.insert(element.element_id.clone(), value.clone());
        }
        (Operation::Select, Tag::Select) => {
            let value = action.value.as_ref().ok_or_else(|| invalid("SELECT needs a value"))?;
            if !element.options.iter().any(|o| o == value) {
                return Err(invalid("value is not one of the options"));
            }
            next.form_values.insert(element.element_id.clone(), value.clone());
        }
        (_, tag) => return Err(invalid(&format!("not applicable to {}", tag.as_str()))),
    }
    next.steps_taken += 1;
    next.success = goal_holds(&task.goal, &next);
    next.terminated = next.success || next.steps_taken >= STEP_CAP;
    Ok(next)
}

/// Replays `actions` from reset, returning every intermediate state
/// (`states[0]` is the reset state).
pub fn replay<'a>(
    site: &SiteSpec,
    task: &Task,
    actions: impl IntoIterator<Item = &'a Action>,
) -> Result<Vec<EnvState>, EnvError> {
    let mut states = vec![reset(site, task)?];
    for action in actions {
        let next = step(states.last().expect("non-empty"), site, task, action)?;
        states.push(next);
    }
    Ok(states)
}

/// Shortest action sequence reaching the task goal.
///
/// Breadth-first search over `(page, satisfied requirements)`; moves are
/// expanded in document order so ties resolve deterministically. Only
/// required form values are ever written.
pub fn oracle_trajectory(site: &SiteSpec, task: &Task) -> Result<Trajectory, EnvError> {
    reset(site, task)?;
    let required: Vec<(&String, &String)> = task.goal.required_values.iter().collect();
    if required.len() > 63 {
        return Err(EnvError::NoPath(task.task_id.clone()));
    }
    let full: u64 = (1u64 << required.len()) - 1;

    type Node = (String, u64);
    let start: Node = (START_PAGE.to_owned(), 0);
    let mut parent: HashMap<Node, Option<(Node, TrajectoryStep)>> = HashMap::new();
    parent.insert(start.clone(), None);
    let mut queue = VecDeque::from([start]);

    while let Some(node) = queue.pop_front() {
        let (page_id, mask) = &node;
        let page = site.page(page_id)?;
        for el in page.elements.iter().filter(|e| !e.hidden) {
            let (action, next) = match el.tag {
                Tag::Link | Tag::Button => match &el.target {
                    Some(t) if t != page_id => (Action::click(&el.element_id), (t.clone(), *mask)),
                    _ => continue,
                },
                Tag::Input | Tag::Select => {
                    let Some(bit) = required.iter().position(|(k, _)| **k == el.element_id) else {
                        continue;
                    };
                    if mask & (1 << bit) != 0 {
                        continue;
                    }
                    let value = required[bit].1.clone();
                    let action = if el.tag == Tag::Input {
                        Action::type_text(&el.element_id, value)
                    } else {
                        if !el.options.contains(&value) {
                            continue;
                        }
                        Action::select(&el.element_id, value)
                    };
                    (action, (page_id.clone(), mask | (1 << bit)))
                }
                Tag::Text => continue,
            };
            if parent.contains_key(&next) {
                continue;
            }
            let step = TrajectoryStep {
                page_id: page_id.clone(),
                action,
            };
            parent.insert(next.clone(), Some((node.clone(), step)));
            if next.0 == task.goal.page_id && next.1 == full {
                let mut steps = Vec::new();
                let mut cur = next;
                while let Some(Some((prev, step))) = parent.get(&cur) {
                    steps.push(step.clone());
                    cur = prev.clone();
                }
                steps.reverse();
                if steps.len() as u32 > STEP_CAP {
                    return Err(EnvError::NoPath(task.task_id.clone()));
                }
                return Ok(Trajectory {
                    task_id: task.task_id.clone(),
                    site_id: site.site_id.clone(),
                    steps,
                });
            }
            queue.push_back(next);
        }
    }
    Err(EnvError::NoPath(task.task_id.clone()))
}
