//! What an agent sees at one step: ranked candidates and the marked layout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domkit::{rank_candidates, serialize_with_values, CandidateSet, DomError};
use crate::layout::{annotate_marks, compute_layout, LayoutError, LayoutObservation, Viewport};
use crate::webenv::{EnvError, EnvState, SiteSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObserveError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dom(#[from] DomError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub page_id: String,
    pub candidates: CandidateSet,
    pub layout: LayoutObservation,
}

/// Candidates for `instruction` on the current page, with form values
/// visible, and the layout marked with those candidates.
pub fn observe(
    site: &SiteSpec,
    state: &EnvState,
    instruction: &str,
    k: usize,
    viewport: Viewport,
) -> Result<Observation, ObserveError> {
    let page = site.page(&state.current_page_id)?;
    let descriptors = serialize_with_values(page, &state.form_values);
    let candidates = rank_candidates(instruction, &descriptors, k)?;
    let layout = annotate_marks(&compute_layout(page, viewport)?, &candidates)?;
    Ok(Observation {
        page_id: page.page_id.clone(),
        candidates,
        layout,
    })
}

/// Whether the visual channel is available to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    Multimodal,
    TextOnly,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Multimodal => "MULTIMODAL",
            Modality::TextOnly => "TEXT_ONLY",
        }
    }
}
