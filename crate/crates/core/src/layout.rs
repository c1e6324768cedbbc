//! Box layouts: the visual snapshot of a page.
//!
//! Elements stack vertically in document order, one fixed-height row each,
//! indented by depth. Rows past the viewport bottom are not visible. Hidden
//! elements keep a zero-height box at their document position and never
//! take a row. Candidate elements can carry numeric marks, numbered from 1
//! in document order.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domkit::CandidateSet;
use crate::webenv::{PageSpec, Tag};

pub const ROW_HEIGHT: u32 = 24;
pub const INDENT: u32 = 16;
pub const MIN_VIEWPORT: u32 = 100;
pub const DEFAULT_VIEWPORT: Viewport = Viewport { width: 800, height: 600 };
pub const LAYOUT_FEATURE_DIM: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("viewport {width}x{height} is below {MIN_VIEWPORT}x{MIN_VIEWPORT}")]
    ViewportTooSmall { width: u32, height: u32 },
    #[error("element {0} is not in the layout")]
    UnknownElement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBox {
    pub element_id: String,
    pub tag: Tag,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub visible: bool,
    pub mark: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutObservation {
    pub viewport: Viewport,
    pub boxes: Vec<LayoutBox>,
}

impl LayoutObservation {
    pub fn get(&self, element_id: &str) -> Option<&LayoutBox> {
        self.boxes.iter().find(|b| b.element_id == element_id)
    }

    pub fn max_mark(&self) -> u32 {
        self.boxes.iter().filter_map(|b| b.mark).max().unwrap_or(0)
    }

    /// Element carrying `mark`, if any.
    pub fn element_for_mark(&self, mark: u32) -> Option<&str> {
        self.boxes
            .iter()
            .find(|b| b.mark == Some(mark))
            .map(|b| b.element_id.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("layout serializes")
    }
}

pub fn compute_layout(page: &PageSpec, viewport: Viewport) -> Result<LayoutObservation, LayoutError> {
    if viewport.width < MIN_VIEWPORT || viewport.height < MIN_VIEWPORT {
        return Err(LayoutError::ViewportTooSmall {
            width: viewport.width,
            height: viewport.height,
        });
    }
    let mut row = 0u32;
    let boxes = page
        .elements
        .iter()
        .map(|e| {
            let x = (e.depth * INDENT).min(viewport.width);
            let y = row * ROW_HEIGHT;
            let w = viewport.width - x;
            if e.hidden {
                return LayoutBox {
                    element_id: e.element_id.clone(),
                    tag: e.tag,
                    x,
                    y,
                    w,
                    h: 0,
                    visible: false,
                    mark: None,
                };
            }
            row += 1;
            LayoutBox {
                element_id: e.element_id.clone(),
                tag: e.tag,
                x,
                y,
                w,
                h: ROW_HEIGHT,
                visible: y + ROW_HEIGHT <= viewport.height && w > 0,
                mark: None,
            }
        })
        .collect();
    Ok(LayoutObservation { viewport, boxes })
}

/// Numbers candidate boxes 1..n in document order; everything else loses
/// its mark.
pub fn annotate_marks(layout: &LayoutObservation, candidates: &CandidateSet) -> Result<LayoutObservation, LayoutError> {
    let wanted: HashSet<&str> = candidates
        .candidates
        .iter()
        .map(|c| c.descriptor.element_id.as_str())
        .collect();
    for id in &wanted {
        if layout.get(id).is_none() {
            return Err(LayoutError::UnknownElement((*id).to_owned()));
        }
    }
    let mut next = 1;
    let boxes = layout
        .boxes
        .iter()
        .map(|b| {
            let mark = if wanted.contains(b.element_id.as_str()) {
                next += 1;
                Some(next - 1)
            } else {
                None
            };
            LayoutBox { mark, ..b.clone() }
        })
        .collect();
    Ok(LayoutObservation {
        viewport: layout.viewport,
        boxes,
    })
}

/// `x, y, w, h` normalized by the viewport, the visible flag, and the mark
/// divided by the largest mark (0 when unmarked).
pub fn layout_features(layout: &LayoutObservation, element_id: &str) -> Result<[f64; LAYOUT_FEATURE_DIM], LayoutError> {
    let b = layout
        .get(element_id)
        .ok_or_else(|| LayoutError::UnknownElement(element_id.to_owned()))?;
    let vw = f64::from(layout.viewport.width);
    let vh = f64::from(layout.viewport.height);
    let max_mark = layout.max_mark();
    let mark = match (b.mark, max_mark) {
        (Some(m), max) if max > 0 => f64::from(m) / f64::from(max),
        _ => 0.0,
    };
    Ok([
        f64::from(b.x) / vw,
        f64::from(b.y) / vh,
        f64::from(b.w) / vw,
        f64::from(b.h) / vh,
        if b.visible { 1.0 } else { 0.0 },
        mark,
    ])
}

/// Layout-complexity proxy for visual difficulty: element count, plus two
/// per invisible element, plus the number of distinct tags.
pub fn visual_complexity(layout: &LayoutObservation) -> f64 {
    let invisible = layout.boxes.iter().filter(|b| !b.visible).count();
    let tags: BTreeSet<Tag> = layout.boxes.iter().map(|b| b.tag).collect();
    (layout.boxes.len() + 2 * invisible + tags.len()) as f64
}
