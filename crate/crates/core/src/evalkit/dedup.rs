//! Split amendment by instruction similarity.
//!
//! Per website, the train and cross-task pools are merged; the tasks least
//! similar to any other task of that website (by unigram Jaccard) become the
//! cross-task set, so near-duplicates stay on the same side. Per-website set
//! sizes are preserved.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::text::{set_jaccard, unigram_set};
use crate::webenv::Task;

/// Jaccard similarity of the unique unigrams of `a` and `b`; 1 when both
/// are empty.
pub fn unigram_jaccard(a: &str, b: &str) -> f64 {
    set_jaccard(&unigram_set(a), &unigram_set(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DedupConfig {
    /// Number of cross-task tasks per website.
    pub k_per_website: BTreeMap<String, usize>,
}

impl DedupConfig {
    pub fn from_cross_task(cross_task: &[Task]) -> DedupConfig {
        let mut k_per_website = BTreeMap::new();
        for t in cross_task {
            *k_per_website.entry(t.site_id.clone()).or_insert(0) += 1;
        }
        DedupConfig { k_per_website }
    }
}

/// Highest similarity of each task to any other task in `pool`; 0 for a
/// singleton pool.
pub fn max_similarities(pool: &[&Task]) -> Vec<f64> {
    let sets: Vec<_> = pool.iter().map(|t| unigram_set(&t.instruction)).collect();
    (0..pool.len())
        .map(|i| {
            (0..pool.len())
                .filter(|&j| j != i)
                .map(|j| set_jaccard(&sets[i], &sets[j]))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Re-partitions with `config.k_per_website[site]` tasks moved to cross-task
/// for each website (ties by ascending task id). Both outputs are sorted by
/// task id.
pub fn amend_splits_with(train: &[Task], cross_task: &[Task], config: &DedupConfig) -> (Vec<Task>, Vec<Task>) {
    let mut by_site: BTreeMap<&str, Vec<&Task>> = BTreeMap::new();
    for t in train.iter().chain(cross_task) {
        by_site.entry(t.site_id.as_str()).or_default().push(t);
    }
    let mut new_train = Vec::with_capacity(train.len());
    let mut new_cross = Vec::with_capacity(cross_task.len());
    for (site, mut pool) in by_site {
        pool.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        let k = config.k_per_website.get(site).copied().unwrap_or(0).min(pool.len());
        let sims = max_similarities(&pool);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(pool[a].task_id.cmp(&pool[b].task_id)));
        for (rank, &i) in order.iter().enumerate() {
            if rank < k {
                new_cross.push(pool[i].clone());
            } else {
                new_train.push(pool[i].clone());
            }
        }
    }
    new_train.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    new_cross.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    (new_train, new_cross)
}

/// [`amend_splits_with`] keeping each website's original cross-task count.
pub fn amend_splits(train: &[Task], cross_task: &[Task]) -> (Vec<Task>, Vec<Task>) {
    amend_splits_with(train, cross_task, &DedupConfig::from_cross_task(cross_task))
}

/// Largest Jaccard similarity between a train task and a cross-task task of
/// the same website; 0 when no website has both.
pub fn max_cross_split_similarity(train: &[Task], cross_task: &[Task]) -> f64 {
    let mut best: f64 = 0.0;
    for a in train {
        let sa = unigram_set(&a.instruction);
        for b in cross_task.iter().filter(|b| b.site_id == a.site_id) {
            best = best.max(set_jaccard(&sa, &unigram_set(&b.instruction)));
        }
    }
    best
}
