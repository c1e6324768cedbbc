//! Seeded corpus generator.
//!
//! Every site follows the same page skeleton (home, one section per concept
//! with a search form, results, per-item detail, checkout and confirmation
//! pages) but picks its own conventions: which synonym labels each section
//! link, which action word labels its primary buttons (submit, reserve and
//! confirm alike), element order, and how much filler surrounds the
//! controls. Each domain has a house style (the first listed synonym and
//! action word) that a share of its sites follow; the rest choose freely.
//! Instructions never name the buttons, so conventions are only learnable
//! from demonstrations on the same site or, through the house style, the
//! same domain.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{self, Theme};
use super::{oracle_trajectory, Corpus, DomainGroup, EnvElement, GoalPredicate, PageSpec, SiteSpec, Tag, Task, START_PAGE};
use crate::text::derive_seed;

/// Generator knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub seed: u64,
    pub n_domains: usize,
    pub sites_per_domain: usize,
    pub tasks_per_site: usize,
    /// Adds collapsed copies of the navigation bar and button groups (a
    /// hidden mobile menu) that share labels and attributes with the
    /// visible controls. Only layout tells the two apart.
    pub hidden_duplicates: bool,
    /// Percentage chance that a site adopts each house-style label.
    pub house_style_percent: u8,
}

impl CorpusProfile {
    pub fn new(seed: u64, n_domains: usize, sites_per_domain: usize, tasks_per_site: usize) -> Self {
        CorpusProfile {
            seed,
            n_domains,
            sites_per_domain,
            tasks_per_site,
            hidden_duplicates: false,
            house_style_percent: 0,
        }
    }
}

/// Generates `n_domains × sites_per_domain` sites with `tasks_per_site`
/// tasks each. Output is a pure function of the arguments.
pub fn generate_corpus(seed: u64, n_domains: usize, sites_per_domain: usize, tasks_per_site: usize) -> Corpus {
    generate_corpus_with(&CorpusProfile::new(seed, n_domains, sites_per_domain, tasks_per_site))
}

pub fn generate_corpus_with(profile: &CorpusProfile) -> Corpus {
    let domains = (0..profile.n_domains)
        .map(|d| {
            let mut theme_rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, &["theme", &d.to_string()]));
            let theme = vocab::theme(d, &mut theme_rng);
            let sites = (0..profile.sites_per_domain)
                .map(|i| build_site(profile, &theme, i))
                .collect();
            DomainGroup {
                domain_id: theme.domain.clone(),
                sites,
            }
        })
        .collect();
    Corpus {
        seed: profile.seed,
        domains,
    }
}

fn site_name(theme: &Theme, index: usize) -> String {
    let p = theme.site_prefixes.len();
    let s = theme.site_suffixes.len();
    let base = format!("{}{}", theme.site_prefixes[index % p], theme.site_suffixes[(index / p) % s]);
    let round = index / (p * s);
    if round == 0 {
        base
    } else {
        format!("{base}{round}")
    }
}

/// Per-site choices fixed at generation time.
struct Conventions {
    nav_labels: Vec<String>,
    concept_order: Vec<usize>,
    primary_action: String,
}

struct SiteBuilder<'a> {
    theme: &'a Theme,
    conv: Conventions,
    rng: ChaCha8Rng,
    next_id: usize,
    hidden_duplicates: bool,
    pages: BTreeMap<String, PageSpec>,
}

/// Element ids created for one concept's pages, used to state goals.
#[derive(Default)]
struct ConceptIds {
    search_input: String,
    search_select: String,
    name_inputs: Vec<String>,
    qty_selects: Vec<String>,
    code_inputs: Vec<String>,
}

fn section_page(k: usize) -> String {
    format!("section-{k}")
}
fn results_page(k: usize) -> String {
    format!("results-{k}")
}
fn detail_page(k: usize, j: usize) -> String {
    format!("detail-{k}-{j}")
}
fn checkout_page(k: usize, j: usize) -> String {
    format!("checkout-{k}-{j}")
}
fn done_page(k: usize, j: usize) -> String {
    format!("done-{k}-{j}")
}
const NOTICE_PAGE: &str = "notice";

fn slug(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join("_")
}

impl<'a> SiteBuilder<'a> {
    fn element(&mut self, tag: Tag, label: &str, depth: u32) -> EnvElement {
        self.next_id += 1;
        EnvElement {
            element_id: format!("e{}", self.next_id),
            tag,
            label: label.to_owned(),
            target: None,
            options: Vec::new(),
            depth,
            attributes: BTreeMap::new(),
            hidden: false,
        }
    }

    fn link(&mut self, label: &str, target: &str, depth: u32) -> EnvElement {
        let mut el = self.element(Tag::Link, label, depth);
        el.target = Some(target.to_owned());
        el.attributes.insert("href".into(), format!("/p{}", self.rng.gen_range(100..1000)));
        el
    }

    fn button(&mut self, label: &str, target: &str, depth: u32) -> EnvElement {
        let mut el = self.element(Tag::Button, label, depth);
        el.target = Some(target.to_owned());
        el.attributes.insert("class".into(), "btn".into());
        el
    }

    fn text(&mut self, label: &str, depth: u32) -> EnvElement {
        self.element(Tag::Text, label, depth)
    }

    fn input(&mut self, label: &str, placeholder: &str) -> EnvElement {
        let mut el = self.element(Tag::Input, label, 2);
        el.attributes.insert("name".into(), slug(label));
        el.attributes.insert("placeholder".into(), placeholder.to_owned());
        el
    }

    fn select(&mut self, label: &str, options: &[String]) -> EnvElement {
        let mut el = self.element(Tag::Select, label, 2);
        el.attributes.insert("name".into(), slug(label));
        el.options = options.to_vec();
        el
    }

    fn filler(&mut self, n: usize) -> Vec<EnvElement> {
        (0..n)
            .map(|_| {
                let label = self.theme.filler.choose(&mut self.rng).expect("filler").clone();
                let depth = self.rng.gen_range(1..=3);
                self.text(&label, depth)
            })
            .collect()
    }

    /// Copies of `elements` with fresh ids, marked hidden.
    fn hidden_copies(&mut self, elements: &[EnvElement]) -> Vec<EnvElement> {
        elements
            .iter()
            .map(|e| {
                self.next_id += 1;
                EnvElement {
                    element_id: format!("e{}", self.next_id),
                    hidden: true,
                    ..e.clone()
                }
            })
            .collect()
    }

    /// Appends `block` to `out`, with a hidden duplicate placed before or
    /// after it when the profile asks for one.
    fn push_block(&mut self, out: &mut Vec<EnvElement>, block: Vec<EnvElement>) {
        if self.hidden_duplicates {
            let copies = self.hidden_copies(&block);
            if self.rng.gen_bool(0.5) {
                out.extend(copies);
                out.extend(block);
            } else {
                out.extend(block);
                out.extend(copies);
            }
        } else {
            out.extend(block);
        }
    }

    fn nav(&mut self) -> Vec<EnvElement> {
        let mut out = vec![self.link(vocab::CHROME_HOME, START_PAGE, 1)];
        for idx in 0..self.conv.concept_order.len() {
            let k = self.conv.concept_order[idx];
            let label = self.conv.nav_labels[k].clone();
            out.push(self.link(&label, &section_page(k), 1));
        }
        out
    }

    fn button_group(&mut self, correct: &str, target: &str) -> Vec<EnvElement> {
        let decoys: Vec<String> = self
            .theme
            .actions
            .iter()
            .filter(|a| a.as_str() != correct)
            .cloned()
            .collect::<Vec<_>>()
            .choose_multiple(&mut self.rng, 2)
            .cloned()
            .collect();
        let mut specs: Vec<(String, String)> = vec![(correct.to_owned(), target.to_owned())];
        specs.extend(decoys.into_iter().map(|d| (d, NOTICE_PAGE.to_owned())));
        specs.shuffle(&mut self.rng);
        specs.iter().map(|(l, t)| self.button(l, t, 2)).collect()
    }

    fn add_page(&mut self, page_id: String, elements: Vec<EnvElement>) {
        self.pages.insert(page_id.clone(), PageSpec { page_id, elements });
    }

    /// Page with the nav bar, a heading and some filler.
    fn simple_page(&mut self, page_id: &str, heading: &str) {
        let mut els = Vec::new();
        let nav = self.nav();
        self.push_block(&mut els, nav);
        els.push(self.text(heading, 0));
        let n = self.rng.gen_range(0..=4);
        els.extend(self.filler(n));
        self.add_page(page_id.to_owned(), els);
    }

    fn build_pages(&mut self, site_id: &str) -> Vec<ConceptIds> {
        let mut home = vec![self.text(&format!("{} {site_id}", vocab::CHROME_WELCOME), 0)];
        let nav = self.nav();
        self.push_block(&mut home, nav);
        let n = self.rng.gen_range(1..=10);
        home.extend(self.filler(n));
        for (label, page) in vocab::CHROME_LINKS {
            home.push(self.link(label, page, 1));
        }
        let n = self.rng.gen_range(0..=6);
        home.extend(self.filler(n));
        self.add_page(START_PAGE.to_owned(), home);

        for (label, page) in vocab::CHROME_LINKS {
            self.simple_page(page, label);
        }
        self.simple_page(NOTICE_PAGE, vocab::CHROME_NOTICE);

        let theme = self.theme;
        let mut ids = Vec::new();
        for (k, concept) in theme.concepts.iter().enumerate() {
            let mut concept_ids = ConceptIds::default();
            let nav_label = self.conv.nav_labels[k].clone();

            let mut els = Vec::new();
            let nav = self.nav();
            self.push_block(&mut els, nav);
            els.push(self.text(&nav_label, 0));
            let n = self.rng.gen_range(0..=3);
            els.extend(self.filler(n));
            let input = self.input(&concept.field, &concept.placeholder);
            let select = self.select(&concept.select_label, &concept.options);
            concept_ids.search_input = input.element_id.clone();
            concept_ids.search_select = select.element_id.clone();
            els.push(input);
            els.push(select);
            let submit = self.conv.primary_action.clone();
            let group = self.button_group(&submit, &results_page(k));
            self.push_block(&mut els, group);
            let n = self.rng.gen_range(0..=12);
            els.extend(self.filler(n));
            self.add_page(section_page(k), els);

            let mut els = Vec::new();
            let nav = self.nav();
            self.push_block(&mut els, nav);
            els.push(self.text(&nav_label, 0));
            let mut order: Vec<usize> = (0..concept.items.len()).collect();
            order.shuffle(&mut self.rng);
            for j in order {
                els.push(self.link(&concept.items[j], &detail_page(k, j), 2));
                let blurb = theme.filler.choose(&mut self.rng).expect("filler").clone();
                els.push(self.text(&blurb, 3));
            }
            let n = self.rng.gen_range(0..=8);
            els.extend(self.filler(n));
            self.add_page(results_page(k), els);

            for (j, item) in concept.items.iter().enumerate() {
                let mut els = Vec::new();
                let nav = self.nav();
                self.push_block(&mut els, nav);
                els.push(self.text(item, 0));
                let n = self.rng.gen_range(1..=4);
                els.extend(self.filler(n));
                let reserve = self.conv.primary_action.clone();
                let group = self.button_group(&reserve, &checkout_page(k, j));
                self.push_block(&mut els, group);
                let n = self.rng.gen_range(0..=8);
                els.extend(self.filler(n));
                self.add_page(detail_page(k, j), els);

                let mut els = Vec::new();
                let nav = self.nav();
                self.push_block(&mut els, nav);
                els.push(self.text(item, 0));
                let name = self.input(vocab::CHROME_NAME_FIELD, vocab::CHROME_NAME_FIELD);
                let qty_options: Vec<String> = vocab::CHROME_QTY_OPTIONS.iter().map(|s| (*s).to_owned()).collect();
                let qty = self.select(vocab::CHROME_QTY_FIELD, &qty_options);
                let code = self.input(vocab::CHROME_CODE_FIELD, vocab::CHROME_CODE_FIELD);
                concept_ids.name_inputs.push(name.element_id.clone());
                concept_ids.qty_selects.push(qty.element_id.clone());
                concept_ids.code_inputs.push(code.element_id.clone());
                els.extend([name, qty, code]);
                let confirm = self.conv.primary_action.clone();
                let group = self.button_group(&confirm, &done_page(k, j));
                self.push_block(&mut els, group);
                let n = self.rng.gen_range(0..=6);
                els.extend(self.filler(n));
                self.add_page(checkout_page(k, j), els);

                self.simple_page(&done_page(k, j), vocab::CHROME_DONE);
            }
            ids.push(concept_ids);
        }
        ids
    }
}

#[derive(Debug, Clone, Copy)]
enum TaskKind {
    Nav,
    Search,
    Filter,
    Detail,
    Book,
    BookFull,
}

const KIND_WEIGHTS: [(TaskKind, u32); 6] = [
    (TaskKind::Nav, 15),
    (TaskKind::Search, 25),
    (TaskKind::Filter, 20),
    (TaskKind::Detail, 20),
    (TaskKind::Book, 10),
    (TaskKind::BookFull, 10),
];

fn pick_kind(rng: &mut ChaCha8Rng) -> TaskKind {
    let total: u32 = KIND_WEIGHTS.iter().map(|(_, w)| w).sum();
    let mut roll = rng.gen_range(0..total);
    for (kind, w) in KIND_WEIGHTS {
        if roll < w {
            return kind;
        }
        roll -= w;
    }
    TaskKind::Search
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in slots {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn make_task(
    theme: &Theme,
    ids: &[ConceptIds],
    rng: &mut ChaCha8Rng,
) -> (String, GoalPredicate) {
    let kind = pick_kind(rng);
    let k = rng.gen_range(0..theme.concepts.len());
    let concept = &theme.concepts[k];
    let j = rng.gen_range(0..concept.items.len());
    let value = theme.values.choose(rng).expect("values").as_str();
    let option = concept.options.choose(rng).expect("options").as_str();
    let name = *vocab::NAMES.choose(rng).expect("names");
    let qty = *vocab::CHROME_QTY_OPTIONS.choose(rng).expect("qty");
    let code = *vocab::CODES.choose(rng).expect("codes");
    let slots = [
        ("c", concept.name.as_str()),
        ("v", value),
        ("o", option),
        ("i", concept.items[j].as_str()),
        ("n", name),
        ("q", qty),
        ("k", code),
    ];
    let pick = |rng: &mut ChaCha8Rng, set: &[&str]| fill(set.choose(rng).expect("templates"), &slots);
    let cid = &ids[k];

    let mut required = BTreeMap::new();
    let (instruction, page_id) = match kind {
        TaskKind::Nav => (pick(rng, &vocab::TEMPLATE_NAV), section_page(k)),
        TaskKind::Search | TaskKind::Filter | TaskKind::Detail | TaskKind::Book | TaskKind::BookFull => {
            required.insert(cid.search_input.clone(), value.to_owned());
            let mut text = pick(rng, &vocab::TEMPLATE_SEARCH);
            let page = match kind {
                TaskKind::Search => results_page(k),
                TaskKind::Filter => {
                    required.insert(cid.search_select.clone(), option.to_owned());
                    text.push_str(&pick(rng, &vocab::TEMPLATE_FILTER));
                    results_page(k)
                }
                TaskKind::Detail => {
                    text.push_str(&pick(rng, &vocab::TEMPLATE_DETAIL));
                    detail_page(k, j)
                }
                _ => {
                    required.insert(cid.search_select.clone(), option.to_owned());
                    required.insert(cid.name_inputs[j].clone(), name.to_owned());
                    text.push_str(&pick(rng, &vocab::TEMPLATE_FILTER));
                    text.push_str(&pick(rng, &vocab::TEMPLATE_DETAIL));
                    text.push_str(&pick(rng, &vocab::TEMPLATE_BOOK));
                    if matches!(kind, TaskKind::BookFull) {
                        required.insert(cid.qty_selects[j].clone(), qty.to_owned());
                        required.insert(cid.code_inputs[j].clone(), code.to_owned());
                        text.push_str(&pick(rng, &vocab::TEMPLATE_FULL));
                    }
                    done_page(k, j)
                }
            };
            (text, page)
        }
    };
    (
        instruction,
        GoalPredicate {
            page_id,
            required_values: required,
        },
    )
}

fn build_site(profile: &CorpusProfile, theme: &Theme, index: usize) -> SiteSpec {
    let site_id = site_name(theme, index);
    let seed = derive_seed(profile.seed, &["site", &theme.domain, &index.to_string()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let house = f64::from(profile.house_style_percent.min(100)) / 100.0;
    let mut label = |options: &[String]| -> String {
        if rng.gen_bool(house) {
            options[0].clone()
        } else {
            options.choose(&mut rng).expect("labels").clone()
        }
    };
    let nav_labels = theme.concepts.iter().map(|c| label(&c.synonyms)).collect();
    let primary_action = label(&theme.actions);
    let mut concept_order: Vec<usize> = (0..theme.concepts.len()).collect();
    concept_order.shuffle(&mut rng);
    let conv = Conventions {
        nav_labels,
        concept_order,
        primary_action,
    };

    let mut builder = SiteBuilder {
        theme,
        conv,
        rng,
        next_id: 0,
        hidden_duplicates: profile.hidden_duplicates,
        pages: BTreeMap::new(),
    };
    let ids = builder.build_pages(&site_id);
    let mut rng = builder.rng;
    let mut site = SiteSpec {
        site_id: site_id.clone(),
        domain_id: theme.domain.clone(),
        pages: builder.pages,
        tasks: Vec::new(),
        seed,
    };

    let mut seen = BTreeSet::new();
    let mut tasks = Vec::with_capacity(profile.tasks_per_site);
    while tasks.len() < profile.tasks_per_site {
        let mut attempt = 0;
        let (instruction, goal) = loop {
            let candidate = make_task(theme, &ids, &mut rng);
            attempt += 1;
            if !seen.contains(&candidate.0) || attempt > 64 {
                break candidate;
            }
        };
        seen.insert(instruction.clone());
        let mut task = Task {
            task_id: format!("{site_id}-t{:02}", tasks.len()),
            instruction,
            site_id: site_id.clone(),
            domain_id: theme.domain.clone(),
            goal,
            oracle_len: 0,
        };
        let traj = oracle_trajectory(&site, &task).expect("generated goals are reachable");
        task.oracle_len = traj.steps.len() as u32;
        tasks.push(task);
    }
    site.tasks = tasks;
    site
}
