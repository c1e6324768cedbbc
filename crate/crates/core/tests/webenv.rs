//! Environment contract: corpus generation, reset, step and oracle paths.

use std::collections::BTreeMap;

use adaptagent::webenv::{
    generate_corpus, oracle_trajectory, replay, reset, step, Action, EnvElement, EnvError, GoalPredicate, PageSpec,
    SiteSpec, Tag, Task, START_PAGE, STEP_CAP,
};
use proptest::prelude::*;

fn element(id: &str, tag: Tag, label: &str, target: Option<&str>) -> EnvElement {
    EnvElement {
        element_id: id.into(),
        tag,
        label: label.into(),
        target: target.map(str::to_owned),
        options: Vec::new(),
        depth: 0,
        attributes: BTreeMap::new(),
        hidden: false,
    }
}

/// Home links to "done" directly and loops on "stay".
fn tiny_site() -> SiteSpec {
    let home = PageSpec {
        page_id: START_PAGE.into(),
        elements: vec![
            element("e0", Tag::Link, "finish", Some("done")),
            element("e1", Tag::Button, "stay", Some(START_PAGE)),
            element("e2", Tag::Input, "name", None),
        ],
    };
    let done = PageSpec {
        page_id: "done".into(),
        elements: vec![element("e3", Tag::Text, "thanks", None)],
    };
    let task = Task {
        task_id: "t0".into(),
        instruction: "finish up".into(),
        site_id: "s0".into(),
        domain_id: "d0".into(),
        goal: GoalPredicate {
            page_id: "done".into(),
            required_values: BTreeMap::new(),
        },
        oracle_len: 1,
    };
    SiteSpec {
        site_id: "s0".into(),
        domain_id: "d0".into(),
        pages: [(START_PAGE.to_owned(), home), ("done".to_owned(), done)].into_iter().collect(),
        tasks: vec![task],
        seed: 0,
    }
}

#[test]
fn single_site_corpus() {
    let corpus = generate_corpus(7, 1, 1, 1);
    assert_eq!(corpus.sites().count(), 1);
    assert_eq!(corpus.tasks().count(), 1);
}

#[test]
fn corpus_counts() {
    let corpus = generate_corpus(7, 3, 5, 4);
    assert_eq!(corpus.sites().count(), 15);
    assert_eq!(corpus.tasks().count(), 60);
    let domains: std::collections::BTreeSet<_> = corpus.sites().map(|s| s.domain_id.clone()).collect();
    assert_eq!(domains.len(), 3);
}

#[test]
fn corpus_serialization_is_deterministic() {
    assert_eq!(
        generate_corpus(7, 2, 3, 4).to_canonical_json(),
        generate_corpus(7, 2, 3, 4).to_canonical_json()
    );
}

#[test]
fn reset_starts_fresh_and_repeats() {
    let site = tiny_site();
    let a = reset(&site, &site.tasks[0]).unwrap();
    assert_eq!(a.steps_taken, 0);
    assert!(!a.terminated && !a.success);
    assert_eq!(a, reset(&site, &site.tasks[0]).unwrap());
}

#[test]
fn reset_rejects_foreign_task() {
    let corpus = generate_corpus(7, 1, 2, 1);
    let sites: Vec<_> = corpus.sites().collect();
    let err = reset(sites[0], &sites[1].tasks[0]).unwrap_err();
    assert!(matches!(err, EnvError::TaskSiteMismatch { .. }));
}

#[test]
fn clicking_goal_link_succeeds() {
    let site = tiny_site();
    let task = &site.tasks[0];
    let state = reset(&site, task).unwrap();
    let next = step(&state, &site, task, &Action::click("e0")).unwrap();
    assert!(next.success && next.terminated);
    assert_eq!(next.steps_taken, 1);
}

#[test]
fn typing_into_button_is_invalid() {
    let site = tiny_site();
    let task = &site.tasks[0];
    let state = reset(&site, task).unwrap();
    let err = step(&state, &site, task, &Action::type_text("e1", "x")).unwrap_err();
    assert_eq!(err.name(), "InvalidOperation");
}

#[test]
fn step_cap_terminates_without_success() {
    let site = tiny_site();
    let task = &site.tasks[0];
    let mut state = reset(&site, task).unwrap();
    for _ in 0..STEP_CAP {
        assert!(!state.terminated);
        state = step(&state, &site, task, &Action::click("e1")).unwrap();
    }
    assert!(state.terminated && !state.success);
    assert_eq!(state.steps_taken, 30);
    assert_eq!(
        step(&state, &site, task, &Action::click("e0")).unwrap_err(),
        EnvError::AlreadyTerminated
    );
}

#[test]
fn unknown_element_is_rejected() {
    let site = tiny_site();
    let task = &site.tasks[0];
    let state = reset(&site, task).unwrap();
    let err = step(&state, &site, task, &Action::click("e3")).unwrap_err();
    assert_eq!(err, EnvError::InvalidElement("e3".into()));
}

#[test]
fn one_click_task_has_one_step_oracle() {
    let site = tiny_site();
    let traj = oracle_trajectory(&site, &site.tasks[0]).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.steps[0].action, Action::click("e0"));
}

#[test]
fn generated_oracles_replay_to_success() {
    let corpus = generate_corpus(11, 3, 3, 6);
    for site in corpus.sites() {
        for task in &site.tasks {
            let traj = oracle_trajectory(site, task).unwrap();
            assert!((1..=30).contains(&traj.len()));
            assert_eq!(traj.len() as u32, task.oracle_len);
            let states = replay(site, task, traj.actions()).unwrap();
            assert!(states.last().unwrap().success, "{}", task.task_id);
            assert!(states[..states.len() - 1].iter().all(|s| !s.success));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_generated_site_is_consistent(seed in 0u64..10_000) {
        let corpus = generate_corpus(seed, 2, 2, 3);
        for site in corpus.sites() {
            prop_assert!(site.check_invariants().is_ok());
            for task in &site.tasks {
                let traj = oracle_trajectory(site, task).unwrap();
                let states = replay(site, task, traj.actions()).unwrap();
                prop_assert!(states.last().unwrap().success);
            }
        }
    }

    #[test]
    fn steps_taken_counts_valid_actions(clicks in proptest::collection::vec(any::<bool>(), 1..40)) {
        let site = tiny_site();
        let task = &site.tasks[0];
        let mut state = reset(&site, task).unwrap();
        let mut taken = 0;
        for go in clicks {
            if state.terminated {
                break;
            }
            state = step(&state, &site, task, &Action::click(if go { "e0" } else { "e1" })).unwrap();
            taken += 1;
        }
        prop_assert_eq!(state.steps_taken, taken);
        prop_assert!(state.steps_taken <= STEP_CAP);
    }
}

fn start_nav_labels(site: &SiteSpec) -> std::collections::BTreeSet<String> {
    site.page(START_PAGE)
        .unwrap()
        .elements
        .iter()
        .filter(|e| e.target.is_some() && !e.hidden)
        .map(|e| e.label.clone())
        .collect()
}

#[test]
fn full_house_style_gives_a_domain_one_vocabulary() {
    use adaptagent::webenv::{generate_corpus_with, CorpusProfile};
    let profile = |percent| CorpusProfile {
        house_style_percent: percent,
        ..CorpusProfile::new(3, 2, 5, 3)
    };
    let domains = |corpus: &adaptagent::webenv::Corpus| {
        let mut by_domain: BTreeMap<String, Vec<std::collections::BTreeSet<String>>> = BTreeMap::new();
        for site in corpus.sites() {
            by_domain.entry(site.domain_id.clone()).or_default().push(start_nav_labels(site));
        }
        by_domain
    };
    for labels in domains(&generate_corpus_with(&profile(100))).values() {
        assert!(labels.windows(2).all(|w| w[0] == w[1]), "{labels:?}");
    }
    let mixed = domains(&generate_corpus_with(&profile(0)));
    assert!(mixed.values().any(|labels| labels.windows(2).any(|w| w[0] != w[1])));
}
