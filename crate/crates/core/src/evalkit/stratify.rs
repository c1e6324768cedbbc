//! Difficulty strata.
//!
//! Sequence difficulty follows the gold trajectory length (≤3 easy, 4–9
//! medium, ≥10 hard). Visual difficulty is a proxy: the mean layout
//! complexity over the gold trajectory's pages, cut at corpus-wide
//! percentiles.

use serde::{Deserialize, Serialize};

use crate::layout::{compute_layout, visual_complexity, DEFAULT_VIEWPORT};
use crate::webenv::{oracle_trajectory, replay, Corpus, SiteSpec, Trajectory};

pub const EASY_MAX_LEN: usize = 3;
pub const HARD_MIN_LEN: usize = 10;
pub const LOW_PERCENTILE: f64 = 33.0;
pub const HIGH_PERCENTILE: f64 = 66.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DifficultyLabel {
    pub sequence: Difficulty,
    pub visual: Difficulty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualThresholds {
    pub low: f64,
    pub high: f64,
}

impl VisualThresholds {
    /// 33rd and 66th percentiles of per-task mean complexity over every task
    /// of the corpus, on oracle trajectories.
    pub fn from_corpus(corpus: &Corpus) -> VisualThresholds {
        let mut values: Vec<f64> = corpus
            .sites()
            .flat_map(|site| {
                site.tasks.iter().filter_map(move |task| {
                    let traj = oracle_trajectory(site, task).ok()?;
                    trajectory_complexity(site, &traj)
                })
            })
            .collect();
        values.sort_by(f64::total_cmp);
        VisualThresholds {
            low: percentile(&values, LOW_PERCENTILE),
            high: percentile(&values, HIGH_PERCENTILE),
        }
    }
}

/// Nearest-rank percentile of sorted `values`; 0 when empty.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn sequence_difficulty(len: usize) -> Difficulty {
    if len <= EASY_MAX_LEN {
        Difficulty::Easy
    } else if len < HARD_MIN_LEN {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    }
}

pub fn visual_difficulty(mean_complexity: f64, thresholds: VisualThresholds) -> Difficulty {
    if mean_complexity < thresholds.low {
        Difficulty::Easy
    } else if mean_complexity <= thresholds.high {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    }
}

/// Mean visual complexity of the pages a trajectory acts on; `None` if it
/// does not replay or is empty.
pub fn trajectory_complexity(site: &SiteSpec, trajectory: &Trajectory) -> Option<f64> {
    let task = site.task(&trajectory.task_id)?;
    let states = replay(site, task, trajectory.actions()).ok()?;
    let values: Vec<f64> = states[..trajectory.len()]
        .iter()
        .filter_map(|s| {
            let page = site.page(&s.current_page_id).ok()?;
            Some(visual_complexity(&compute_layout(page, DEFAULT_VIEWPORT).ok()?))
        })
        .collect();
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Labels a trajectory of `len` steps whose pages have the given
/// complexities.
pub fn stratify_difficulty(len: usize, layout_complexities: &[f64], thresholds: VisualThresholds) -> DifficultyLabel {
    let mean = if layout_complexities.is_empty() {
        0.0
    } else {
        layout_complexities.iter().sum::<f64>() / layout_complexities.len() as f64
    };
    DifficultyLabel {
        sequence: sequence_difficulty(len),
        visual: visual_difficulty(mean, thresholds),
    }
}
