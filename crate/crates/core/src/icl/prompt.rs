//! Prompt assembly.
//!
//! A bundle is an ordered list of text blocks and image slots. Rendering
//! writes each image slot as a `<<IMAGE k>>` line (k counts from 1) directly
//! above the text that follows it; text blocks are separated by blank lines.

use serde::{Deserialize, Serialize};

use super::{Demo, DemoSegment, IclError};
use crate::layout::LayoutObservation;
use crate::observation::Modality;

/// Stand-in for the agent framework's own instructions, which precede the
/// demonstrations.
pub const BASE_PROMPT: &str = "You are a web agent completing a task on a website step by step. At each step you see the \
current page as a screenshot with numbered marks and a list of candidate elements. Decide the single next action: \
the element to act on, the operation (CLICK, TYPE or SELECT) and the value, if the operation needs one.";

pub const DEMO_INTRO: &str =
    "To begin with, here is a quick example of one of the many tasks you could be performing on the website";
pub const DEMO_DESCRIPTION: &str = "Example task's description:";
pub const DEMO_STEPS: &str = "To do this task, you could take the steps shown below.";
pub const DEMO_END: &str =
    "This marks the end of an example task and its steps. Now, let's move on to the task at hand.";

/// Identifies the step a prompt is asking about; not rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryKey {
    pub task_id: String,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Block {
    Text(String),
    /// Serialized layout snapshot.
    ImageSlot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub blocks: Vec<Block>,
    pub n_demos: usize,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryKey>,
}

impl PromptBundle {
    pub fn image_slots(&self) -> usize {
        self.blocks.iter().filter(|b| matches!(b, Block::ImageSlot(_))).count()
    }

    pub fn text_blocks(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Block::Text(t) => Some(t.as_str()),
                Block::ImageSlot(_) => None,
            })
            .collect()
    }

    pub fn push_text(&mut self, text: impl Into<String>) {
        self.blocks.push(Block::Text(text.into()));
    }

    pub fn push_image(&mut self, layout: &LayoutObservation) {
        if self.modality == Modality::Multimodal {
            self.blocks.push(Block::ImageSlot(layout.to_json()));
        }
    }

    /// Text form with image placeholders, terminated by a newline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut image = 0;
        for (i, block) in self.blocks.iter().enumerate() {
            match block {
                Block::Text(t) => {
                    out.push_str(t);
                    if i + 1 < self.blocks.len() {
                        out.push_str("\n\n");
                    }
                }
                Block::ImageSlot(_) => {
                    image += 1;
                    out.push_str(&format!("<<IMAGE {image}>>\n"));
                }
            }
        }
        out.push('\n');
        out
    }
}

/// `ELEMENT`/`ACTION`/`VALUE` lines of one demonstration step.
pub fn step_fields(segment: &DemoSegment) -> String {
    format!(
        "ELEMENT: {}\n\nACTION: {}\n\nVALUE: {}",
        segment.element_name(),
        segment.operation,
        segment.value.as_deref().unwrap_or("None")
    )
}

fn push_demo(bundle: &mut PromptBundle, demo: &Demo) {
    bundle.push_text(format!("{DEMO_INTRO} {}.", demo.website));
    bundle.push_text(format!("{DEMO_DESCRIPTION} {}", demo.task_description));
    bundle.push_text(DEMO_STEPS);
    for segment in &demo.segments {
        bundle.push_image(&segment.layout);
        bundle.push_text(step_fields(segment));
    }
    bundle.push_text(DEMO_END);
}

/// The base prompt followed by the first `n` demonstrations.
pub fn build_prompt(base: &str, demos: &[Demo], n: usize, modality: Modality) -> Result<PromptBundle, IclError> {
    if n > demos.len() {
        return Err(IclError::NotEnoughDemos {
            requested: n,
            available: demos.len(),
        });
    }
    let mut bundle = PromptBundle {
        blocks: vec![Block::Text(base.to_owned())],
        n_demos: n,
        modality,
        query: None,
    };
    for demo in &demos[..n] {
        push_demo(&mut bundle, demo);
    }
    Ok(bundle)
}
