//! Evaluation: metrics, split amendment, stratification, import, the
//! multi-run protocol and report files.

use std::collections::{BTreeMap, BTreeSet};

use adaptagent::demostore::TrajectoryRecord;
use adaptagent::evalkit::{
    amend_splits, amend_splits_with, compute_metrics, default_split, element_accuracy, export_native, import_records,
    import_str, max_cross_split_similarity, mean_operation_f1, operation_f1, overall_success_rate, report_csv,
    report_json, run_protocol, sequence_difficulty, step_success_rate, stratify_difficulty, unigram_jaccard,
    visual_difficulty, AgentModel, Arm, DedupConfig, Difficulty, DifficultyLabel, EvalError, EvalMode, ImportFormat,
    ProtocolConfig, SplitName, SplitSpec, StepRecord, TaskReport, VisualThresholds,
};
use adaptagent::experiments::{default_corpus, scripted_responses, standard_split};
use adaptagent::icl::{render_action, MockClient, ScriptEntry};
use adaptagent::metatrain::DemoBank;
use adaptagent::observation::{observe, Modality};
use adaptagent::webenv::{
    generate_corpus, oracle_trajectory, reset, step, Action, Corpus, DomainGroup, EnvElement, GoalPredicate,
    Operation, PageSpec, SiteSpec, Tag, Task, START_PAGE,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EASY: DifficultyLabel = DifficultyLabel {
    sequence: Difficulty::Easy,
    visual: Difficulty::Easy,
};

fn report(pairs: &[(Action, Action)]) -> TaskReport {
    let steps = pairs
        .iter()
        .enumerate()
        .map(|(i, (p, g))| StepRecord::score(i, Some(p.clone()), g.clone()))
        .collect();
    TaskReport::new("t", "s", "d", steps, EASY)
}

fn task(id: &str, site: &str, instruction: &str) -> Task {
    Task {
        task_id: id.into(),
        instruction: instruction.into(),
        site_id: site.into(),
        domain_id: "d".into(),
        goal: GoalPredicate {
            page_id: "done".into(),
            required_values: BTreeMap::new(),
        },
        oracle_len: 1,
    }
}

#[test]
fn element_accuracy_by_hand() {
    let all = report(&[(Action::click("e1"), Action::click("e1"))]);
    assert_eq!(element_accuracy(&[all]).unwrap(), 1.0);
    let half = report(&[
        (Action::click("e1"), Action::click("e1")),
        (Action::click("e2"), Action::click("e3")),
    ]);
    assert_eq!(element_accuracy(&[half]).unwrap(), 0.5);
    let none = report(&[(Action::click("e9"), Action::click("e1"))]);
    assert_eq!(element_accuracy(&[none]).unwrap(), 0.0);
    assert_eq!(element_accuracy(&[]).unwrap_err(), EvalError::EmptyInput);
}

#[test]
fn operation_f1_by_hand() {
    assert_eq!(operation_f1(Some(&Action::click("a")), &Action::click("b")), 1.0);
    let f1 = operation_f1(Some(&Action::type_text("a", "new york")), &Action::type_text("a", "new york city"));
    assert!((f1 - 0.8).abs() < 1e-12);
    assert_eq!(operation_f1(Some(&Action::click("a")), &Action::type_text("a", "x")), 0.0);
    assert_eq!(operation_f1(None, &Action::click("a")), 0.0);
}

#[test]
fn step_success_by_hand() {
    let wrong_value = report(&[(Action::type_text("a", "paris"), Action::type_text("a", "rome"))]);
    assert!(wrong_value.steps[0].element_correct);
    assert!(!wrong_value.steps[0].step_correct);
    let three_of_four = report(&[
        (Action::click("a"), Action::click("a")),
        (Action::click("b"), Action::click("b")),
        (Action::click("x"), Action::click("c")),
        (Action::select("d", "blue"), Action::select("d", "blue")),
    ]);
    assert_eq!(step_success_rate(&[three_of_four.clone()]).unwrap(), 0.75);
    assert_eq!(overall_success_rate(&[three_of_four], EvalMode::Trajectory).unwrap(), 0.0);
    let perfect = report(&[(Action::click("a"), Action::click("a")), (Action::click("b"), Action::click("b"))]);
    assert_eq!(step_success_rate(&[perfect.clone()]).unwrap(), 1.0);
    let mut live = perfect;
    live.live_success = Some(true);
    assert_eq!(overall_success_rate(&[live.clone()], EvalMode::Trajectory).unwrap(), 1.0);
    assert_eq!(overall_success_rate(&[live], EvalMode::Live).unwrap(), 1.0);
}

#[test]
fn live_mode_needs_a_signal() {
    let r = report(&[(Action::click("a"), Action::click("a"))]);
    assert!(matches!(
        overall_success_rate(&[r], EvalMode::Live),
        Err(EvalError::MissingLiveSignal(_))
    ));
}

#[test]
fn task_metrics_are_macro_averaged() {
    let long = report(&[
        (Action::click("x"), Action::click("a")),
        (Action::click("x"), Action::click("b")),
        (Action::click("x"), Action::click("c")),
    ]);
    let short = report(&[(Action::click("a"), Action::click("a"))]);
    let m = compute_metrics(&[long, short], EvalMode::Trajectory).unwrap();
    assert_eq!(m.ele_acc, 0.5);
    assert_eq!(m.step_sr, 0.5);
    assert_eq!(m.overall_sr, 0.5);
    assert_eq!(m.op_f1, 1.0);
}

/// Lowercase, drop punctuation, split on whitespace, count by hand.
fn jaccard_oracle(a: &str, b: &str) -> f64 {
    let words = |s: &str| -> Vec<String> {
        s.to_lowercase()
            .chars()
            .filter(|c| !matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '\'' | '"' | '-' | '(' | ')'))
            .collect::<String>()
            .split_whitespace()
            .map(str::to_owned)
            .collect()
    };
    let (wa, wb) = (words(a), words(b));
    let mut union: Vec<&String> = Vec::new();
    for w in wa.iter().chain(&wb) {
        if !union.contains(&w) {
            union.push(w);
        }
    }
    if union.is_empty() {
        return 1.0;
    }
    let inter = union.iter().filter(|w| wa.contains(w) && wb.contains(w)).count();
    inter as f64 / union.len() as f64
}

#[test]
fn jaccard_examples() {
    assert_eq!(unigram_jaccard("book flight now", "book flight now"), 1.0);
    assert_eq!(unigram_jaccard("book flight now", "book hotel now"), 0.5);
    let (a, b) = ("add Prometheus movie to watchlist.", "add The Wire to the watchlist.");
    assert_eq!(unigram_jaccard(a, b), jaccard_oracle(a, b));
    assert!((jaccard_oracle(a, b) - 3.0 / 7.0).abs() < 1e-15);
    assert_eq!(unigram_jaccard("", "..."), 1.0);
}

#[test]
fn sites_without_cross_tasks_keep_membership() {
    let train = vec![task("a1", "a", "buy shoes"), task("a2", "a", "buy socks")];
    let cross = vec![task("b1", "b", "rent a car")];
    let (t, c) = amend_splits(&train, &cross);
    assert_eq!(t, train);
    assert_eq!(c, cross);
}

#[test]
fn identical_tasks_end_up_together() {
    let train = vec![task("x1", "s", "book cheap flight"), task("x3", "s", "rent a car downtown")];
    let cross = vec![task("x2", "s", "book cheap flight")];
    let before = max_cross_split_similarity(&train, &cross);
    let (t, c) = amend_splits(&train, &cross);
    let cross_ids: Vec<&str> = c.iter().map(|t| t.task_id.as_str()).collect();
    assert_eq!(cross_ids, ["x3"]);
    assert_eq!(t.len(), 2);
    assert_eq!(before, 1.0);
    assert!(max_cross_split_similarity(&t, &c) < before);
}

#[test]
fn explicit_k_moves_that_many() {
    let pool: Vec<Task> = (0..6).map(|i| task(&format!("t{i}"), "s", &format!("word{i} shared"))).collect();
    let config = DedupConfig {
        k_per_website: [("s".to_owned(), 4)].into_iter().collect(),
    };
    let (t, c) = amend_splits_with(&pool[..5], &pool[5..], &config);
    assert_eq!((t.len(), c.len()), (2, 4));
}

#[test]
fn sequence_thresholds() {
    assert_eq!(sequence_difficulty(3), Difficulty::Easy);
    assert_eq!(sequence_difficulty(4), Difficulty::Medium);
    assert_eq!(sequence_difficulty(9), Difficulty::Medium);
    assert_eq!(sequence_difficulty(10), Difficulty::Hard);
    let th = VisualThresholds { low: 10.0, high: 20.0 };
    assert_eq!(visual_difficulty(9.5, th), Difficulty::Easy);
    assert_eq!(visual_difficulty(10.0, th), Difficulty::Medium);
    assert_eq!(visual_difficulty(20.5, th), Difficulty::Hard);
    let label = stratify_difficulty(4, &[5.0, 7.0], th);
    assert_eq!(label, DifficultyLabel { sequence: Difficulty::Medium, visual: Difficulty::Easy });
}

#[test]
fn default_split_is_disjoint() {
    let corpus = default_corpus();
    let split = standard_split(&corpus, 0).unwrap();
    split.validate(&corpus).unwrap();
    let total = split.train.len() + split.cross_task.len() + split.cross_website.len() + split.cross_domain.len();
    assert_eq!(total, corpus.tasks().count());
    assert_eq!(split.held_out_sites.len(), 5);
    assert_eq!(split.held_out_domains.len(), 1);
    assert!(default_split(&corpus, 5, 4, 1, 0).is_err());
}

#[test]
fn native_import_round_trips() {
    let corpus = generate_corpus(4, 1, 2, 2);
    let tasks: Vec<Task> = corpus.tasks().cloned().collect();
    let records: Vec<TrajectoryRecord> = corpus
        .sites()
        .flat_map(|s| s.tasks.iter().map(move |t| TrajectoryRecord::from_oracle(s, t).unwrap()))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("export.json");
    std::fs::write(&path, export_native(&tasks, &records)).unwrap();
    let back = import_records(&path, ImportFormat::Native).unwrap();
    assert_eq!(back.tasks, tasks);
    assert_eq!(back.records, records);
    assert_eq!(back.skipped, 0);
}

const MIND2WEB_FIXTURE: &str = r#"[
  {
    "annotation_id": "a-1",
    "website": "exampleair",
    "domain": "Travel",
    "confirmed_task": "Find a flight from Paris to Rome",
    "actions": [
      {"action_uid": "u1", "operation": {"op": "TYPE", "value": "Paris"},
       "pos_candidates": [{"backend_node_id": "101"}]},
      {"action_uid": "u2", "operation": {"op": "CLICK", "value": ""}, "pos_candidates": []}
    ]
  },
  {
    "annotation_id": "a-2",
    "website": "exampleair",
    "confirmed_task": "Broken entry",
    "actions": [{"action_uid": "u3"}]
  }
]"#;

#[test]
fn mind2web_fixture_maps_one_task() {
    let imported = import_str(MIND2WEB_FIXTURE, ImportFormat::Mind2webJson).unwrap();
    assert_eq!(imported.tasks.len(), 1);
    assert_eq!(imported.records.len(), 1);
    assert_eq!(imported.skipped, 1);
    let t = &imported.tasks[0];
    assert_eq!((t.task_id.as_str(), t.site_id.as_str(), t.domain_id.as_str()), ("a-1", "exampleair", "Travel"));
    let actions: Vec<Action> = imported.records[0].steps.iter().map(|s| s.action.clone()).collect();
    assert_eq!(actions, vec![Action::type_text("101", "Paris"), Action::click("u2")]);
    assert!(matches!(import_str("{}", ImportFormat::Mind2webJson), Err(EvalError::MalformedFile(_))));
}

#[test]
fn native_import_skips_bad_entries() {
    let text = r#"{"tasks": [{"task_id": "only"}], "records": []}"#;
    let imported = import_str(text, ImportFormat::Native).unwrap();
    assert_eq!((imported.tasks.len(), imported.skipped), (0, 1));
}

fn small_setup() -> (Corpus, SplitSpec) {
    let corpus = generate_corpus(8, 3, 4, 5);
    let split = default_split(&corpus, 2, 1, 1, 0).unwrap();
    (corpus, split)
}

#[test]
fn oracle_agent_scores_perfectly() {
    let (corpus, split) = small_setup();
    let bank = DemoBank::new(&corpus, Modality::Multimodal);
    for which in SplitName::ALL {
        let protocol = ProtocolConfig::default();
        let script = scripted_responses(&corpus, &split, which, 1.0, &protocol, 0).unwrap();
        let client = MockClient::new(script, false);
        let r = run_protocol(Arm::IclNDemos, AgentModel::Client(&client), &bank, &split, which, &protocol).unwrap();
        for m in [r.metrics.ele_acc, r.metrics.op_f1, r.metrics.step_sr, r.metrics.overall_sr] {
            assert_eq!(m.mean, 1.0, "{which}");
            assert_eq!(m.std, 0.0);
        }
        assert_eq!(r.n_runs, 5);
    }
}

#[test]
fn single_run_has_zero_spread() {
    let (corpus, split) = small_setup();
    let bank = DemoBank::new(&corpus, Modality::Multimodal);
    let protocol = ProtocolConfig {
        n_runs: 1,
        ..ProtocolConfig::default()
    };
    let script = scripted_responses(&corpus, &split, SplitName::CrossWebsite, 0.5, &protocol, 3).unwrap();
    let client = MockClient::new(script, false);
    let r = run_protocol(Arm::IclNDemos, AgentModel::Client(&client), &bank, &split, SplitName::CrossWebsite, &protocol)
        .unwrap();
    assert_eq!(r.runs.len(), 1);
    for m in [r.metrics.ele_acc, r.metrics.op_f1, r.metrics.step_sr, r.metrics.overall_sr] {
        assert_eq!(m.std, 0.0);
    }
    assert!(r.metrics.step_sr.mean < 1.0);
}

#[test]
fn arm_and_model_must_agree() {
    let (corpus, split) = small_setup();
    let bank = DemoBank::new(&corpus, Modality::Multimodal);
    let client = MockClient::from_responses(["x"], true);
    let err = run_protocol(
        Arm::PolicyFt,
        AgentModel::Client(&client),
        &bank,
        &split,
        SplitName::CrossTask,
        &ProtocolConfig::default(),
    )
    .unwrap_err();
    assert_eq!(err, EvalError::ArmMismatch("POLICY_FT".into()));
}

/// Keyed script choosing a uniformly random candidate and operation at
/// every gold step.
fn random_script(corpus: &Corpus, ids: &[String], seed: u64) -> Vec<ScriptEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = corpus.index();
    let mut out = Vec::new();
    for id in ids {
        let (site, task) = index.task(id).unwrap();
        let gold = oracle_trajectory(site, task).unwrap();
        let mut state = reset(site, task).unwrap();
        for (i, g) in gold.steps.iter().enumerate() {
            let obs = observe(site, &state, &task.instruction, 50, adaptagent::layout::DEFAULT_VIEWPORT).unwrap();
            let c = &obs.candidates.candidates[rng.gen_range(0..obs.candidates.len())].descriptor;
            let op = Operation::ALL[rng.gen_range(0..3)];
            let words: Vec<&str> = task.instruction.split_whitespace().collect();
            let value = op.requires_value().then(|| words[rng.gen_range(0..words.len())].to_owned());
            let action = Action {
                element_id: c.element_id.clone(),
                operation: op,
                value,
            };
            out.push(ScriptEntry::keyed(task.task_id.clone(), i, render_action(&action)));
            state = step(&state, site, task, &g.action).unwrap();
        }
    }
    out
}

#[test]
fn random_agent_respects_metric_dominance() {
    let (corpus, split) = small_setup();
    let bank = DemoBank::new(&corpus, Modality::Multimodal);
    for which in SplitName::ALL {
        for seed in 0..3 {
            let client = MockClient::new(random_script(&corpus, split.tasks(which), seed), false);
            let r = run_protocol(Arm::IclNDemos, AgentModel::Client(&client), &bank, &split, which, &ProtocolConfig::default())
                .unwrap();
            for m in &r.runs {
                assert!(m.overall_sr <= m.step_sr && m.step_sr <= m.ele_acc, "{m:?}");
            }
            assert!(r.metrics.ele_acc.mean < 0.8);
        }
    }
}

fn link(id: &str, label: &str, target: &str) -> EnvElement {
    EnvElement {
        element_id: id.into(),
        tag: Tag::Link,
        label: label.into(),
        target: Some(target.into()),
        options: Vec::new(),
        depth: 0,
        attributes: BTreeMap::new(),
        hidden: false,
    }
}

/// One site where "done" is reachable directly or through "mid".
fn two_path_corpus() -> Corpus {
    let pages = [
        PageSpec {
            page_id: START_PAGE.into(),
            elements: vec![link("e0", "shortcut", "done"), link("e1", "scenic route", "mid")],
        },
        PageSpec {
            page_id: "mid".into(),
            elements: vec![link("e2", "continue", "done"), link("e3", "back", START_PAGE)],
        },
        PageSpec {
            page_id: "done".into(),
            elements: vec![link("e4", "again", START_PAGE)],
        },
    ];
    let tasks = (0..3)
        .map(|i| Task {
            domain_id: "d".into(),
            ..task(&format!("p{i}"), "paths", &format!("get to the end {i}"))
        })
        .collect();
    let site = SiteSpec {
        site_id: "paths".into(),
        domain_id: "d".into(),
        pages: pages.into_iter().map(|p| (p.page_id.clone(), p)).collect(),
        tasks,
        seed: 0,
    };
    Corpus {
        seed: 0,
        domains: vec![DomainGroup {
            domain_id: "d".into(),
            sites: vec![site],
        }],
    }
}

#[test]
fn live_mode_credits_alternative_paths() {
    let corpus = two_path_corpus();
    let ids: Vec<String> = corpus.tasks().map(|t| t.task_id.clone()).collect();
    let split = SplitSpec {
        train: Vec::new(),
        cross_task: Vec::new(),
        cross_website: ids.clone(),
        cross_domain: Vec::new(),
        train_sites: Vec::new(),
        held_out_sites: vec!["paths".into()],
        held_out_domains: Vec::new(),
    };
    let mut script = Vec::new();
    for id in &ids {
        script.push(ScriptEntry::keyed(id.clone(), 0, render_action(&Action::click("e1"))));
        script.push(ScriptEntry::keyed(id.clone(), 1, render_action(&Action::click("e2"))));
    }
    let client = MockClient::new(script, false);
    let bank = DemoBank::new(&corpus, Modality::TextOnly);
    let run = |mode| {
        let protocol = ProtocolConfig {
            mode,
            n_adapt_tasks: 1,
            n_runs: 2,
            ..ProtocolConfig::default()
        };
        run_protocol(Arm::IclNDemos, AgentModel::Client(&client), &bank, &split, SplitName::CrossWebsite, &protocol)
            .unwrap()
    };
    let live = run(EvalMode::Live);
    let trajectory = run(EvalMode::Trajectory);
    assert_eq!(live.metrics.overall_sr.mean, 1.0);
    assert_eq!(trajectory.metrics.overall_sr.mean, 0.0);
    assert_eq!(live.metrics.step_sr.mean, 0.0);
    assert!(live.tasks.iter().all(|t| t.report.live_success == Some(true)));
}

#[test]
fn reports_serialize() {
    let (corpus, split) = small_setup();
    let bank = DemoBank::new(&corpus, Modality::Multimodal);
    let protocol = ProtocolConfig {
        n_runs: 2,
        ..ProtocolConfig::default()
    };
    let script = scripted_responses(&corpus, &split, SplitName::CrossWebsite, 0.6, &protocol, 1).unwrap();
    let client = MockClient::new(script, false);
    let r = run_protocol(Arm::IclNDemos, AgentModel::Client(&client), &bank, &split, SplitName::CrossWebsite, &protocol)
        .unwrap();
    let json = report_json(&r);
    assert_eq!(json["arm"], "ICL_N_DEMOS");
    assert_eq!(json["n_runs"], 2);
    assert!(json["metrics"]["step_sr"]["mean"].is_number());
    let csv = report_csv(&r).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run,task_id,site_id,domain_id,n_steps,ele_acc,op_f1,step_sr,overall_success,live_success,sequence,visual"
    );
    assert_eq!(lines.count(), r.tasks.len());
    let per_run: BTreeSet<usize> = r.tasks.iter().map(|t| t.run).collect();
    assert_eq!(per_run, [0, 1].into_iter().collect());
}

fn arb_action() -> impl Strategy<Value = Action> {
    let words = proptest::collection::vec(prop_oneof![Just("new"), Just("york"), Just("city"), Just("red")], 0..4);
    (0usize..3, 0usize..3, words).prop_map(|(e, op, words)| {
        let id = format!("e{e}");
        match Operation::ALL[op] {
            Operation::Click => Action::click(id),
            Operation::Type => Action::type_text(id, words.join(" ")),
            Operation::Select => Action::select(id, words.join(" ")),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metrics_are_bounded_and_ordered(tasks in proptest::collection::vec(proptest::collection::vec((arb_action(), arb_action()), 1..6), 1..6)) {
        let reports: Vec<TaskReport> = tasks.iter().map(|t| report(t)).collect();
        let m = compute_metrics(&reports, EvalMode::Trajectory).unwrap();
        for v in [m.ele_acc, m.op_f1, m.step_sr, m.overall_sr] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.overall_sr <= m.step_sr && m.step_sr <= m.ele_acc);
        prop_assert_eq!(m.op_f1, mean_operation_f1(&reports).unwrap());
    }

    #[test]
    fn operation_f1_is_symmetric(a in arb_action(), b in arb_action()) {
        let ab = operation_f1(Some(&a), &b);
        let ba = operation_f1(Some(&b), &a);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(operation_f1(Some(&a), &a), 1.0);
    }

    #[test]
    fn jaccard_matches_oracle(a in "[a-zA-Z,. ]{0,30}", b in "[a-zA-Z,. ]{0,30}") {
        prop_assert_eq!(unigram_jaccard(&a, &b), jaccard_oracle(&a, &b));
        prop_assert_eq!(unigram_jaccard(&a, &b), unigram_jaccard(&b, &a));
    }

    #[test]
    fn amendment_keeps_sizes_and_is_idempotent(seed in 0u64..500) {
        let corpus = generate_corpus(seed, 2, 2, 6);
        let split = default_split(&corpus, 1, 1, 2, seed).unwrap();
        let index = corpus.index();
        let lookup = |ids: &[String]| -> Vec<Task> { ids.iter().map(|i| index.task(i).unwrap().1.clone()).collect() };
        let (train, cross) = (lookup(&split.train), lookup(&split.cross_task));
        let (t1, c1) = amend_splits(&train, &cross);
        prop_assert_eq!((t1.len(), c1.len()), (train.len(), cross.len()));
        let (t2, c2) = amend_splits(&t1, &c1);
        prop_assert_eq!(&t2, &t1);
        prop_assert_eq!(&c2, &c1);
    }
}
