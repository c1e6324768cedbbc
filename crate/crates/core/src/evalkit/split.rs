//! Train and held-out splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::text::derive_seed;
use crate::webenv::{Corpus, Task};

pub const DEFAULT_HELD_OUT_SITES: usize = 5;
pub const DEFAULT_HELD_OUT_DOMAINS: usize = 1;
pub const DEFAULT_CROSS_TASK_PER_SITE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    CrossTask,
    CrossWebsite,
    CrossDomain,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::CrossTask, SplitName::CrossWebsite, SplitName::CrossDomain];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::CrossTask => "cross_task",
            SplitName::CrossWebsite => "cross_website",
            SplitName::CrossDomain => "cross_domain",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cross_task" => Ok(SplitName::CrossTask),
            "cross_website" => Ok(SplitName::CrossWebsite),
            "cross_domain" => Ok(SplitName::CrossDomain),
            other => Err(format!("unknown split {other:?} (expected cross-task, cross-website or cross-domain)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub cross_task: Vec<String>,
    pub cross_website: Vec<String>,
    pub cross_domain: Vec<String>,
    pub train_sites: Vec<String>,
    pub held_out_sites: Vec<String>,
    pub held_out_domains: Vec<String>,
}

impl SplitSpec {
    pub fn tasks(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::CrossTask => &self.cross_task,
            SplitName::CrossWebsite => &self.cross_website,
            SplitName::CrossDomain => &self.cross_domain,
        }
    }

    /// The corpus restricted to training tasks.
    pub fn train_corpus(&self, corpus: &Corpus) -> Corpus {
        let keep: BTreeSet<&str> = self.train.iter().map(String::as_str).collect();
        corpus.restrict(|t| keep.contains(t.task_id.as_str()))
    }

    /// Checks disjointness and that held-out sites and domains are absent
    /// from training.
    pub fn validate(&self, corpus: &Corpus) -> Result<(), EvalError> {
        let index = corpus.index();
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        let named = [
            ("train", &self.train),
            ("cross_task", &self.cross_task),
            ("cross_website", &self.cross_website),
            ("cross_domain", &self.cross_domain),
        ];
        for (name, ids) in named {
            for id in ids {
                if index.task(id).is_none() {
                    return Err(EvalError::InvalidSplit(format!("{name} names unknown task {id}")));
                }
                if let Some(prev) = seen.insert(id, name) {
                    return Err(EvalError::InvalidSplit(format!("task {id} is in both {prev} and {name}")));
                }
            }
        }
        let train_sites: BTreeSet<&str> = self
            .train
            .iter()
            .filter_map(|id| index.task(id).map(|(s, _)| s.site_id.as_str()))
            .collect();
        let train_domains: BTreeSet<&str> = self
            .train
            .iter()
            .filter_map(|id| index.task(id).map(|(s, _)| s.domain_id.as_str()))
            .collect();
        for id in &self.cross_website {
            let (site, _) = index.task(id).expect("checked");
            if train_sites.contains(site.site_id.as_str()) {
                return Err(EvalError::InvalidSplit(format!("cross-website site {} has training tasks", site.site_id)));
            }
        }
        for id in &self.cross_domain {
            let (site, _) = index.task(id).expect("checked");
            if train_domains.contains(site.domain_id.as_str()) {
                return Err(EvalError::InvalidSplit(format!("cross-domain domain {} has training tasks", site.domain_id)));
            }
        }
        Ok(())
    }
}

/// The last `held_out_domains` domains form cross-domain; `held_out_sites`
/// sites taken round-robin from the ends of the remaining domains form
/// cross-website; every other site contributes `cross_task_per_site`
/// seeded picks to cross-task and the rest to train.
pub fn default_split(
    corpus: &Corpus,
    held_out_sites: usize,
    held_out_domains: usize,
    cross_task_per_site: usize,
    seed: u64,
) -> Result<SplitSpec, EvalError> {
    let n_domains = corpus.domains.len();
    if held_out_domains >= n_domains {
        return Err(EvalError::InvalidSplit(format!(
            "cannot hold out {held_out_domains} of {n_domains} domains"
        )));
    }
    let train_domains = &corpus.domains[..n_domains - held_out_domains];
    let total_sites: usize = train_domains.iter().map(|d| d.sites.len()).sum();
    if held_out_sites >= total_sites {
        return Err(EvalError::InvalidSplit(format!(
            "cannot hold out {held_out_sites} of {total_sites} training-domain sites"
        )));
    }
    let mut held: BTreeSet<String> = BTreeSet::new();
    let mut depth = 0;
    while held.len() < held_out_sites {
        for d in train_domains {
            if held.len() < held_out_sites && depth < d.sites.len() {
                held.insert(d.sites[d.sites.len() - 1 - depth].site_id.clone());
            }
        }
        depth += 1;
    }
    let mut spec = SplitSpec {
        train: Vec::new(),
        cross_task: Vec::new(),
        cross_website: Vec::new(),
        cross_domain: Vec::new(),
        train_sites: Vec::new(),
        held_out_sites: held.iter().cloned().collect(),
        held_out_domains: corpus.domains[n_domains - held_out_domains..]
            .iter()
            .map(|d| d.domain_id.clone())
            .collect(),
    };
    for d in &corpus.domains[n_domains - held_out_domains..] {
        spec.cross_domain.extend(d.sites.iter().flat_map(|s| s.tasks.iter().map(|t| t.task_id.clone())));
    }
    for d in train_domains {
        for site in &d.sites {
            let ids: Vec<String> = site.tasks.iter().map(|t| t.task_id.clone()).collect();
            if held.contains(&site.site_id) {
                spec.cross_website.extend(ids);
                continue;
            }
            spec.train_sites.push(site.site_id.clone());
            let mut order = ids.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["cross_task", &site.site_id]));
            order.shuffle(&mut rng);
            let n_cross = cross_task_per_site.min(ids.len().saturating_sub(1));
            let cross: BTreeSet<&String> = order[..n_cross].iter().collect();
            for id in &ids {
                if cross.contains(id) {
                    spec.cross_task.push(id.clone());
                } else {
                    spec.train.push(id.clone());
                }
            }
        }
    }
    spec.validate(corpus)?;
    Ok(spec)
}

/// Replaces the train/cross-task partition with `train` and `cross_task`.
pub fn with_partition(spec: &SplitSpec, train: &[Task], cross_task: &[Task]) -> SplitSpec {
    SplitSpec {
        train: train.iter().map(|t| t.task_id.clone()).collect(),
        cross_task: cross_task.iter().map(|t| t.task_id.clone()).collect(),
        ..spec.clone()
    }
}
