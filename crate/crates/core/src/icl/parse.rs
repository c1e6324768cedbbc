//! Reading actions out of agent responses.

use super::IclError;
use crate::domkit::{CandidateSet, ElementDescriptor};
use crate::webenv::{Action, Operation};

/// Display name of an element: `[tag] text`.
pub fn element_name(d: &ElementDescriptor) -> String {
    format!("[{}] {}", d.tag.as_str(), d.text)
}

/// Response text for `action`, with the element given by id.
pub fn render_action(action: &Action) -> String {
    format!(
        "ELEMENT: {}\nACTION: {}\nVALUE: {}",
        action.element_id,
        action.operation,
        action.value.as_deref().unwrap_or("None")
    )
}

fn field<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    text.lines().find_map(|line| {
        let line = line.trim();
        let (key, rest) = line.split_once(':')?;
        key.trim().eq_ignore_ascii_case(name).then(|| rest.trim())
    })
}

fn resolve<'a>(reference: &str, candidates: &'a CandidateSet) -> Option<&'a ElementDescriptor> {
    let reference = reference.trim().trim_matches(|c| c == '`' || c == '"');
    if let Some(c) = candidates.candidates.iter().find(|c| c.descriptor.element_id == reference) {
        return Some(&c.descriptor);
    }
    let mark = reference.trim_start_matches('[').trim_end_matches(']');
    if let Ok(m) = mark.parse::<usize>() {
        if m >= 1 {
            return candidates.in_document_order().get(m - 1).copied();
        }
    }
    candidates
        .candidates
        .iter()
        .map(|c| &c.descriptor)
        .find(|d| d.text.eq_ignore_ascii_case(reference) || element_name(d).eq_ignore_ascii_case(reference))
}

/// Extracts `ELEMENT`, `ACTION` and `VALUE` (case-insensitive). The element
/// resolves by id, then by mark number, then by label.
pub fn parse_action_response(text: &str, candidates: &CandidateSet) -> Result<Action, IclError> {
    let element = field(text, "element").ok_or_else(|| IclError::UnparseableResponse("no ELEMENT field".into()))?;
    let op_text = field(text, "action").ok_or_else(|| IclError::UnparseableResponse("no ACTION field".into()))?;
    let operation = Operation::parse(op_text).ok_or_else(|| IclError::InvalidOperation(op_text.to_owned()))?;
    let descriptor = resolve(element, candidates).ok_or_else(|| IclError::UnknownElement(element.to_owned()))?;
    let value = match field(text, "value") {
        _ if operation == Operation::Click => None,
        None => None,
        Some(v) if v.eq_ignore_ascii_case("none") || v.is_empty() => None,
        Some(v) => Some(v.to_owned()),
    };
    Ok(Action {
        element_id: descriptor.element_id.clone(),
        operation,
        value,
    })
}
