//! Element descriptors, candidate ranking and per-element features.
//!
//! Ranking is lexical: the Jaccard overlap between instruction unigrams and
//! element unigrams (text plus attribute values), blended with a small tag
//! prior. Ties resolve by ascending document index.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{coverage, hashed_embedding, set_jaccard, unigram_set, unigrams};
use crate::webenv::{PageSpec, Tag};

/// Default number of candidates kept per step.
pub const DEFAULT_K: usize = 50;

pub const FEATURE_DIM: usize = 8 + TEXT_HASH_DIM + ATTR_HASH_DIM;
pub const TEXT_HASH_DIM: usize = 32;
pub const ATTR_HASH_DIM: usize = 8;

const OVERLAP_WEIGHT: f64 = 0.9;
const PRIOR_WEIGHT: f64 = 0.1;
const DOC_INDEX_SCALE: f64 = 50.0;
const DEPTH_SCALE: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomError {
    #[error("no elements to rank")]
    EmptyElementList,
    #[error("K must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDescriptor {
    pub element_id: String,
    pub tag: Tag,
    pub text: String,
    pub attributes: BTreeMap<String, String>,
    pub doc_index: usize,
    pub depth: u32,
    /// Options of a select element.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

impl ElementDescriptor {
    /// Unigrams of the text, then of every attribute value, then of every
    /// option.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = unigrams(&self.text);
        for v in self.attributes.values() {
            out.extend(unigrams(v));
        }
        for o in &self.options {
            out.extend(unigrams(o));
        }
        out
    }

    pub fn token_set(&self) -> BTreeSet<String> {
        self.tokens().into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub descriptor: ElementDescriptor,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub task_id: String,
    pub step_index: usize,
    pub candidates: Vec<Candidate>,
    pub k: usize,
}

impl CandidateSet {
    pub fn with_context(mut self, task_id: impl Into<String>, step_index: usize) -> Self {
        self.task_id = task_id.into();
        self.step_index = step_index;
        self
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn position(&self, element_id: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.descriptor.element_id == element_id)
    }

    pub fn contains(&self, element_id: &str) -> bool {
        self.position(element_id).is_some()
    }

    /// Candidate descriptors sorted by document index.
    pub fn in_document_order(&self) -> Vec<&ElementDescriptor> {
        let mut out: Vec<&ElementDescriptor> = self.candidates.iter().map(|c| &c.descriptor).collect();
        out.sort_by_key(|d| d.doc_index);
        out
    }
}

/// One descriptor per element in document order.
pub fn serialize_elements(page: &PageSpec) -> Vec<ElementDescriptor> {
    page.elements
        .iter()
        .enumerate()
        .map(|(i, e)| ElementDescriptor {
            element_id: e.element_id.clone(),
            tag: e.tag,
            text: e.label.clone(),
            attributes: e.attributes.clone(),
            doc_index: i,
            depth: e.depth,
            options: e.options.clone(),
        })
        .collect()
}

/// Like [`serialize_elements`], with current form values exposed as a
/// `value` attribute on filled inputs and selects.
pub fn serialize_with_values(page: &PageSpec, form_values: &BTreeMap<String, String>) -> Vec<ElementDescriptor> {
    let mut out = serialize_elements(page);
    for d in &mut out {
        if let Some(v) = form_values.get(&d.element_id) {
            d.attributes.insert("value".into(), v.clone());
        }
    }
    out
}

fn tag_prior(tag: Tag) -> f64 {
    match tag {
        Tag::Button | Tag::Link => 1.0,
        Tag::Input | Tag::Select => 0.5,
        Tag::Text => 0.0,
    }
}

/// Ranking score in `[0, 1]`.
pub fn score_element(instruction: &BTreeSet<String>, element: &ElementDescriptor) -> f64 {
    let tokens = element.token_set();
    let overlap = if tokens.is_empty() {
        0.0
    } else {
        set_jaccard(instruction, &tokens)
    };
    OVERLAP_WEIGHT * overlap + PRIOR_WEIGHT * tag_prior(element.tag)
}

pub fn rank_candidates(instruction: &str, elements: &[ElementDescriptor], k: usize) -> Result<CandidateSet, DomError> {
    if k == 0 {
        return Err(DomError::ZeroK);
    }
    if elements.is_empty() {
        return Err(DomError::EmptyElementList);
    }
    let instr = unigram_set(instruction);
    let mut scored: Vec<Candidate> = elements
        .iter()
        .map(|e| Candidate {
            score: score_element(&instr, e),
            descriptor: e.clone(),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.descriptor.doc_index.cmp(&b.descriptor.doc_index))
    });
    scored.truncate(k);
    Ok(CandidateSet {
        task_id: String::new(),
        step_index: 0,
        candidates: scored,
        k,
    })
}

/// Tokens hashed into the text embedding: text, attribute keys, attribute
/// values and options.
pub fn hash_tokens(element: &ElementDescriptor) -> Vec<String> {
    let mut out = unigrams(&element.text);
    for (k, v) in &element.attributes {
        out.push(format!("@{k}"));
        out.extend(unigrams(v));
    }
    for o in &element.options {
        out.extend(unigrams(o));
    }
    out
}

/// Layout: tag one-hot (5) | overlap (1) | doc index (1) | depth (1) |
/// hashed label (32, text and options) | hashed attributes (8).
pub fn featurize_element(instruction: &str, element: &ElementDescriptor) -> [f64; FEATURE_DIM] {
    featurize_with(&unigram_set(instruction), element)
}

/// [`featurize_element`] with the instruction already tokenized.
pub fn featurize_with(instruction: &BTreeSet<String>, element: &ElementDescriptor) -> [f64; FEATURE_DIM] {
    let mut out = [0.0; FEATURE_DIM];
    out[element.tag.index()] = 1.0;
    out[5] = coverage(&element.token_set(), instruction);
    out[6] = (element.doc_index as f64 / DOC_INDEX_SCALE).min(1.0);
    out[7] = (f64::from(element.depth) / DEPTH_SCALE).min(1.0);
    let mut label = unigrams(&element.text);
    label.extend(element.options.iter().flat_map(|o| unigrams(o)));
    out[8..8 + TEXT_HASH_DIM].copy_from_slice(&hashed_embedding(&label, TEXT_HASH_DIM));
    let attrs = element.attributes.iter().flat_map(|(k, v)| std::iter::once(format!("@{k}")).chain(unigrams(v)));
    out[8 + TEXT_HASH_DIM..].copy_from_slice(&hashed_embedding(attrs, ATTR_HASH_DIM));
    out
}
