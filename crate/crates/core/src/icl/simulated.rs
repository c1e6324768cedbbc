//! A deterministic prompt-reading agent.
//!
//! It reads only what a real model would: the demonstrations, the task, the
//! previous actions, the candidate list and, when present, the screenshot.
//! Elements are scored by label overlap with the task, with a bonus for
//! labels the demonstrations clicked and a penalty for elements already
//! acted on. With a screenshot, zero-height (unrendered) elements are
//! ignored; without one, duplicate labels are indistinguishable and the
//! first in mark order wins.

use std::collections::BTreeSet;

use super::client::{AgentClient, ClientError};
use super::prompt::{Block, PromptBundle, DEMO_DESCRIPTION};
use super::{QUERY_CANDIDATES, QUERY_HISTORY, QUERY_TASK};
use crate::layout::LayoutObservation;
use crate::text::{coverage, unigrams};

const DEMO_LABEL_BONUS: f64 = 1.0;
const REPEAT_PENALTY: f64 = 2.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedClient;

#[derive(Debug, Default)]
struct DemoKnowledge {
    element_names: BTreeSet<String>,
    /// Words directly before a typed value in a demo description.
    anchors: Vec<String>,
    /// Description words that never belong to a value.
    template_words: BTreeSet<String>,
}

#[derive(Debug)]
struct CandidateLine {
    element_id: String,
    tag: String,
    name: String,
    label_tokens: Vec<String>,
    options: Vec<String>,
}

fn parse_candidate(line: &str) -> Option<CandidateLine> {
    let rest = line.strip_prefix('[')?;
    let (_, rest) = rest.split_once("] ")?;
    let mut parts = rest.split(" | ");
    let head = parts.next()?;
    let (element_id, name) = head.split_once(' ')?;
    let tag = name.strip_prefix('[')?.split_once(']')?.0.to_owned();
    let text = name.split_once("] ").map_or("", |(_, t)| t);
    let mut label_tokens = unigrams(text);
    let mut options = Vec::new();
    for p in parts {
        if let Some(opts) = p.strip_prefix("options: ") {
            options = opts.split("; ").map(str::to_owned).collect();
        } else if let Some((k, v)) = p.split_once('=') {
            if k != "class" && k != "href" && k != "value" {
                label_tokens.extend(unigrams(v));
            }
        }
    }
    Some(CandidateLine {
        element_id: element_id.to_owned(),
        tag,
        name: name.to_owned(),
        label_tokens,
        options,
    })
}

fn field<'a>(block: &'a str, key: &str) -> Option<&'a str> {
    block.lines().find_map(|l| l.strip_prefix(key)).map(str::trim)
}

fn read_demos(blocks: &[Block]) -> DemoKnowledge {
    let mut k = DemoKnowledge::default();
    let mut description: Vec<String> = Vec::new();
    let mut values: Vec<String> = Vec::new();
    let flush = |description: &mut Vec<String>, values: &mut Vec<String>, k: &mut DemoKnowledge| {
        let value_words: BTreeSet<String> = values.iter().flat_map(|v| unigrams(v)).collect();
        for v in values.iter() {
            let words = unigrams(v);
            if let Some(pos) = (0..description.len()).find(|&i| description[i..].starts_with(&words)) {
                if pos > 0 && !k.anchors.contains(&description[pos - 1]) {
                    k.anchors.push(description[pos - 1].clone());
                }
            }
        }
        k.template_words
            .extend(description.iter().filter(|w| !value_words.contains(*w)).cloned());
        description.clear();
        values.clear();
    };
    for b in blocks {
        let Block::Text(t) = b else { continue };
        if let Some(d) = t.strip_prefix(DEMO_DESCRIPTION) {
            flush(&mut description, &mut values, &mut k);
            description = unigrams(d);
        } else if let Some(name) = field(t, "ELEMENT:") {
            k.element_names.insert(name.to_owned());
            let op = field(t, "ACTION:").unwrap_or("");
            if let Some(v) = field(t, "VALUE:").filter(|v| *v != "None" && op == "TYPE") {
                values.push(v.to_owned());
            }
        }
    }
    flush(&mut description, &mut values, &mut k);
    k
}

fn type_value(instruction: &[String], demos: &DemoKnowledge, typed: &BTreeSet<String>) -> String {
    for anchor in &demos.anchors {
        for (i, w) in instruction.iter().enumerate() {
            if w != anchor {
                continue;
            }
            let span: Vec<String> = instruction[i + 1..]
                .iter()
                .take_while(|w| !demos.template_words.contains(*w))
                .cloned()
                .collect();
            let text = span.join(" ");
            if !span.is_empty() && !typed.contains(&text) {
                return text;
            }
        }
    }
    instruction.last().cloned().unwrap_or_default()
}

impl SimulatedClient {
    fn respond(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        let bad = |m: &str| ClientError::Transport(format!("prompt has no {m}"));
        let blocks = &prompt.blocks;
        let task_at = blocks
            .iter()
            .rposition(|b| matches!(b, Block::Text(t) if t.starts_with(QUERY_TASK)))
            .ok_or_else(|| bad("task"))?;
        let Block::Text(task_block) = &blocks[task_at] else { unreachable!() };
        let (task_line, history) = task_block.split_once(QUERY_HISTORY).unwrap_or((task_block, ""));
        let instruction = unigrams(task_line.trim_start_matches(QUERY_TASK));
        let instruction_set: BTreeSet<String> = instruction.iter().cloned().collect();
        let mut acted: BTreeSet<String> = BTreeSet::new();
        let mut typed: BTreeSet<String> = BTreeSet::new();
        for line in history.lines().filter(|l| l.contains(" -> ")) {
            let (name, act) = line.split_once(" -> ").expect("checked");
            acted.insert(name.trim().to_owned());
            if let Some(v) = act.strip_prefix("TYPE ") {
                typed.insert(v.trim().to_owned());
            }
        }
        let layout: Option<LayoutObservation> = blocks[task_at..].iter().find_map(|b| match b {
            Block::ImageSlot(json) => serde_json::from_str(json).ok(),
            Block::Text(_) => None,
        });
        let candidates_block = blocks[task_at..]
            .iter()
            .find_map(|b| match b {
                Block::Text(t) => t.strip_prefix(QUERY_CANDIDATES),
                Block::ImageSlot(_) => None,
            })
            .ok_or_else(|| bad("candidate list"))?;
        let demos = read_demos(&blocks[..task_at]);

        let mut best: Option<(f64, CandidateLine)> = None;
        for c in candidates_block.lines().filter_map(parse_candidate) {
            if c.tag == "text" {
                continue;
            }
            if let Some(l) = &layout {
                if l.get(&c.element_id).is_some_and(|b| b.h == 0) {
                    continue;
                }
            }
            let tokens: BTreeSet<String> = c.label_tokens.iter().chain(c.options.iter()).flat_map(|t| unigrams(t)).collect();
            let mut score = coverage(&tokens, &instruction_set);
            if demos.element_names.contains(&c.name) {
                score += DEMO_LABEL_BONUS;
            }
            if acted.contains(&c.name) {
                score -= REPEAT_PENALTY;
            }
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, c));
            }
        }
        let (_, choice) = best.ok_or_else(|| bad("actionable candidate"))?;
        let (op, value) = match choice.tag.as_str() {
            "input" => ("TYPE", type_value(&instruction, &demos, &typed)),
            "select" => {
                let mut option = String::new();
                let mut top = f64::NEG_INFINITY;
                for o in &choice.options {
                    let score = coverage(&unigrams(o).into_iter().collect(), &instruction_set);
                    if score > top {
                        top = score;
                        option = o.clone();
                    }
                }
                ("SELECT", option)
            }
            _ => ("CLICK", "None".to_owned()),
        };
        Ok(format!("ELEMENT: {}\nACTION: {op}\nVALUE: {value}", choice.element_id))
    }
}

impl AgentClient for SimulatedClient {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        self.respond(prompt)
    }
}
