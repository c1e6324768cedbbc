//! Acceptance suite. Each test checks one criterion and writes a single
//! PASS/FAIL line to stdout, bypassing output capture.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use adaptagent::evalkit::{
    amend_splits, compute_metrics, max_cross_split_similarity, sequence_difficulty, stratify_difficulty,
    step_success_rate, trajectory_complexity, Difficulty, DifficultyLabel, EvalMode, SplitName, StepRecord,
    TaskReport, VisualThresholds,
};
use adaptagent::experiments::{
    adaptation_gain, default_corpus, hidden_duplicate_corpus, modality_gap, ndemo_trend, standard_split,
    strategy_comparison, TrainingConfig,
};
use adaptagent::evalkit::ProtocolConfig;
use adaptagent::icl::{build_prompt, deconstruct_demo, Demo, BASE_PROMPT};
use adaptagent::metatrain::{fomaml_step_with, DemoBank, QuadraticProbe, Strategy};
use adaptagent::observation::Modality;
use adaptagent::policy::{grad, init_params, mean_loss, StepExample};
use adaptagent::webenv::{
    generate_corpus, oracle_trajectory, replay, Action, GoalPredicate, Operation, Task,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u8, ok: bool, detail: impl Display) {
    let line = format!("criterion {criterion:>2}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).expect("stdout");
    out.flush().expect("stdout");
    assert!(ok, "{}", line.trim_end());
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

#[test]
fn criterion_01_fomaml_matches_closed_form() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let theta: f64 = rng.gen_range(-5.0..5.0);
        let alpha: f64 = rng.gen_range(0.0..1.0);
        let beta: f64 = rng.gen_range(0.0..1.0);
        let n_tasks = rng.gen_range(1..6);
        let centers: Vec<f64> = (0..n_tasks).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let batches: Vec<Vec<f64>> = centers.iter().map(|&c| vec![c]).collect();
        let (next, _) = fomaml_step_with(&QuadraticProbe, &theta, &batches, |b| (&b[..], &b[..]), alpha, beta, 1);
        let expected = theta - beta * centers.iter().map(|c| (1.0 - alpha) * (theta - c)).sum::<f64>();
        worst = worst.max((next - expected).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst <= 1e-9 && within(elapsed, 1),
        format!("FOMAML closed form: max error {worst:.2e} over 50 draws in {elapsed:.2?}"),
    );
}

fn finite_difference(params: &adaptagent::policy::PolicyParams, batch: &[StepExample], index: usize, h: f64) -> f64 {
    let mut plus = params.clone();
    plus.values[index] += h;
    let mut minus = params.clone();
    minus.values[index] -= h;
    (mean_loss(&plus, batch) - mean_loss(&minus, batch)) / (2.0 * h)
}

#[test]
fn criterion_02_policy_gradient_matches_finite_differences() {
    let start = Instant::now();
    let corpus = generate_corpus(7, 2, 3, 4);
    let bank = DemoBank::new(&corpus, Modality::Multimodal);
    let tasks: Vec<&Task> = corpus.tasks().collect();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(seed, 8);
        let mut batch: Vec<StepExample> = Vec::new();
        for task in tasks.choose_multiple(&mut rng, 2) {
            batch.extend(bank.examples(&task.task_id).expect("oracle demo").iter().cloned());
        }
        batch.shuffle(&mut rng);
        batch.truncate(4);
        let analytic = grad(&params, &batch).expect("non-empty batch");
        let n = params.values.len();
        let mut coords: Vec<usize> = (0..n).collect();
        coords.shuffle(&mut rng);
        coords.truncate(200);
        // always include the output heads, which sit at the end
        coords.extend(n.saturating_sub(40)..n);
        for &i in &coords {
            let numeric = finite_difference(&params, &batch, i, 1e-5);
            let a = analytic.values[i];
            let rel = (a - numeric).abs() / f64::max(a.abs().max(numeric.abs()), 1e-6);
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        worst <= 1e-4 && within(elapsed, 30),
        format!("policy gradient vs central differences: max relative error {worst:.2e} (1e-6 floor) over 20 batches in {elapsed:.2?}"),
    );
}

fn protocol() -> ProtocolConfig {
    ProtocolConfig::default()
}

#[test]
fn criterion_03_adaptation_beats_data_equivalent_finetuning() {
    let start = Instant::now();
    let corpus = default_corpus();
    let split = standard_split(&corpus, 0).expect("default split");
    let rows = adaptation_gain(&corpus, &split, &TrainingConfig::default(), &protocol()).expect("experiment runs");
    let elapsed = start.elapsed();
    let mut ok = within(elapsed, 600);
    let mut parts = Vec::new();
    for row in &rows {
        let (b, a) = (&row.baseline.metrics, &row.adapted.metrics);
        let step_gap = a.step_sr.mean - b.step_sr.mean;
        ok &= step_gap >= 0.02 && a.overall_sr.mean > b.overall_sr.mean;
        parts.push(format!(
            "{}: step SR {:.3} vs {:.3} (gap {:+.3}), overall SR {:.3} vs {:.3}",
            row.split, a.step_sr.mean, b.step_sr.mean, step_gap, a.overall_sr.mean, b.overall_sr.mean
        ));
    }
    verdict(
        3,
        ok && rows.len() == 2,
        format!("FOMAML adapted vs FT-DE over 5 seeds; {}; {elapsed:.1?}", parts.join("; ")),
    );
}

#[test]
fn criterion_04_selection_strategy_ordering() {
    let start = Instant::now();
    let corpus = default_corpus();
    let split = standard_split(&corpus, 0).expect("default split");
    let rows = strategy_comparison(&corpus, &split, &TrainingConfig::default(), &protocol()).expect("experiment runs");
    let elapsed = start.elapsed();
    let get = |s: Strategy, which: SplitName| {
        rows.iter()
            .find(|r| r.strategy == s)
            .and_then(|r| r.overall_sr(which))
            .expect("strategy row")
    };
    let (xw, xd) = (SplitName::CrossWebsite, SplitName::CrossDomain);
    let intra_web = get(Strategy::Intra, xw) - get(Strategy::Inter, xw);
    let inter_dom = get(Strategy::Inter, xd) - get(Strategy::Intra, xd);
    let hybrid_gap = |which| {
        get(Strategy::Hybrid, which) - f64::max(get(Strategy::Intra, which), get(Strategy::Inter, which))
    };
    let ok = intra_web >= 0.01
        && inter_dom >= 0.01
        && hybrid_gap(xw) >= -0.01
        && hybrid_gap(xd) >= -0.01
        && within(elapsed, 1200);
    let table: Vec<String> = Strategy::ALL
        .iter()
        .map(|&s| format!("{s} {:.3}/{:.3}", get(s, xw), get(s, xd)))
        .collect();
    verdict(
        4,
        ok,
        format!(
            "overall SR cross-website/cross-domain: {}; INTRA-INTER web {intra_web:+.3}, INTER-INTRA domain {inter_dom:+.3}, HYBRID to best {:+.3}/{:+.3}; {elapsed:.1?}",
            table.join(", "),
            hybrid_gap(xw),
            hybrid_gap(xd)
        ),
    );
}

#[test]
fn criterion_05_layout_helps_on_hidden_duplicates() {
    let start = Instant::now();
    let corpus = hidden_duplicate_corpus();
    let split = standard_split(&corpus, 0).expect("default split");
    let rows = modality_gap(&corpus, &split, &TrainingConfig::default(), &protocol()).expect("experiment runs");
    let elapsed = start.elapsed();
    let ok = rows.len() == 2 && rows.iter().all(|r| r.step_sr_gap() >= 0.02) && within(elapsed, 300);
    let parts: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{} step SR {:.3} multimodal vs {:.3} text-only",
                r.agent, r.multimodal.metrics.step_sr.mean, r.text_only.metrics.step_sr.mean
            )
        })
        .collect();
    verdict(5, ok, format!("{}; {elapsed:.1?}", parts.join("; ")));
}

fn oracle_tokens(text: &str) -> Vec<String> {
    let mut words: Vec<String> = text
        .to_lowercase()
        .split(char::is_whitespace)
        .map(|w| w.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect();
    words.sort();
    words
}

fn oracle_op_f1(pred: Option<&Action>, gold: &Action) -> f64 {
    let Some(pred) = pred else { return 0.0 };
    if pred.operation != gold.operation {
        return 0.0;
    }
    let p = oracle_tokens(pred.value.as_deref().unwrap_or(""));
    let mut g = oracle_tokens(gold.value.as_deref().unwrap_or(""));
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let (np, ng) = (p.len(), g.len());
    let mut common = 0;
    for w in &p {
        if let Some(pos) = g.iter().position(|x| x == w) {
            g.remove(pos);
            common += 1;
        }
    }
    2.0 * common as f64 / (np + ng) as f64
}

fn oracle_step_ok(pred: Option<&Action>, gold: &Action) -> bool {
    match pred {
        None => false,
        Some(p) => {
            p.element_id == gold.element_id
                && p.operation == gold.operation
                && (gold.operation == Operation::Click || p.value == gold.value)
        }
    }
}

fn random_action(rng: &mut ChaCha8Rng) -> Action {
    const VALUES: [&str; 6] = ["New York", "new york!", "red shoes", "Red", "2 adults, 1 child", "blue"];
    let element_id = format!("e{}", rng.gen_range(0..3));
    match rng.gen_range(0..3) {
        0 => Action::click(element_id),
        1 => Action::type_text(element_id, *VALUES.choose(rng).expect("values")),
        _ => Action::select(element_id, *VALUES.choose(rng).expect("values")),
    }
}

#[test]
fn criterion_06_metrics_match_brute_force() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let label = DifficultyLabel {
        sequence: Difficulty::Easy,
        visual: Difficulty::Easy,
    };
    let (mut worst, mut dominance) = (0.0f64, true);
    for _ in 0..500 {
        let n_tasks = rng.gen_range(1..8);
        let mut raw: Vec<Vec<(Option<Action>, Action)>> = Vec::new();
        for _ in 0..n_tasks {
            let n_steps = rng.gen_range(1..6);
            raw.push(
                (0..n_steps)
                    .map(|_| {
                        let gold = random_action(&mut rng);
                        let pred = match rng.gen_range(0..4) {
                            0 => None,
                            1 => Some(gold.clone()),
                            _ => Some(random_action(&mut rng)),
                        };
                        (pred, gold)
                    })
                    .collect(),
            );
        }
        let reports: Vec<TaskReport> = raw
            .iter()
            .enumerate()
            .map(|(t, steps)| {
                let records = steps
                    .iter()
                    .enumerate()
                    .map(|(i, (p, g))| StepRecord::score(i, p.clone(), g.clone()))
                    .collect();
                TaskReport::new(format!("t{t}"), "site", "domain", records, label)
            })
            .collect();
        let metrics = compute_metrics(&reports, EvalMode::Trajectory).expect("non-empty");

        let per_task = |f: &dyn Fn(Option<&Action>, &Action) -> f64| -> f64 {
            raw.iter()
                .map(|steps| steps.iter().map(|(p, g)| f(p.as_ref(), g)).sum::<f64>() / steps.len() as f64)
                .sum::<f64>()
                / raw.len() as f64
        };
        let ele = per_task(&|p, g| if p.is_some_and(|p| p.element_id == g.element_id) { 1.0 } else { 0.0 });
        let op = per_task(&|p, g| oracle_op_f1(p, g));
        let step = per_task(&|p, g| if oracle_step_ok(p, g) { 1.0 } else { 0.0 });
        let overall = raw
            .iter()
            .filter(|steps| steps.iter().all(|(p, g)| oracle_step_ok(p.as_ref(), g)))
            .count() as f64
            / raw.len() as f64;
        for (a, b) in [
            (metrics.ele_acc, ele),
            (metrics.op_f1, op),
            (metrics.step_sr, step),
            (metrics.overall_sr, overall),
        ] {
            worst = worst.max((a - b).abs());
        }
        dominance &= metrics.overall_sr <= metrics.step_sr && metrics.step_sr <= metrics.ele_acc;
    }
    let elapsed = start.elapsed();
    verdict(
        6,
        worst <= 1e-12 && dominance && within(elapsed, 10),
        format!("metrics vs brute force on 500 report sets: max difference {worst:.1e}, dominance {dominance}; {elapsed:.2?}"),
    );
}

fn fixture_task(id: &str, site: &str, instruction: &str) -> Task {
    Task {
        task_id: id.to_owned(),
        instruction: instruction.to_owned(),
        site_id: site.to_owned(),
        domain_id: "entertainment".to_owned(),
        goal: GoalPredicate {
            page_id: String::new(),
            required_values: Default::default(),
        },
        oracle_len: 1,
    }
}

fn oracle_jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = oracle_tokens(a).into_iter().collect();
    let sb: BTreeSet<String> = oracle_tokens(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}

#[test]
fn criterion_07_dedup_amendment() {
    let start = Instant::now();
    let pairs = [
        ("a", "add Prometheus movie to watchlist.", "add The Wire to the watchlist."),
        ("a", "rate the film Heat five stars", "rate the film Alien five stars"),
        ("a", "find showtimes for Dune tonight", "find showtimes for Dune tomorrow"),
        ("b", "buy two tickets for the jazz concert", "buy two tickets for the rock concert"),
        ("b", "subscribe to the weekly newsletter", "subscribe to the monthly newsletter"),
    ];
    let singles = [
        ("a", "change my account password"),
        ("a", "browse documentaries about oceans"),
        ("a", "contact customer support by email"),
        ("a", "download the mobile app"),
        ("a", "read reviews of classic westerns"),
        ("b", "locate the nearest venue parking"),
        ("b", "gift card balance lookup"),
        ("b", "list upcoming comedy shows"),
        ("b", "cancel an existing reservation"),
    ];
    let mut train = Vec::new();
    let mut cross = Vec::new();
    for (i, (site, first, second)) in pairs.iter().enumerate() {
        train.push(fixture_task(&format!("p{i}a"), site, first));
        cross.push(fixture_task(&format!("p{i}b"), site, second));
    }
    for (i, (site, text)) in singles.iter().enumerate() {
        train.push(fixture_task(&format!("s{i}"), site, text));
    }

    let before = max_cross_split_similarity(&train, &cross);
    let (new_train, new_cross) = amend_splits(&train, &cross);
    let after = max_cross_split_similarity(&new_train, &new_cross);
    let (again_train, again_cross) = amend_splits(&new_train, &new_cross);
    let sizes_kept = new_train.len() == train.len() && new_cross.len() == cross.len();
    let idempotent = again_train == new_train && again_cross == new_cross;

    let mut non_dup: Vec<f64> = Vec::new();
    let all: Vec<&Task> = train.iter().chain(&cross).collect();
    let planted: BTreeSet<(String, String)> = (0..pairs.len())
        .map(|i| (format!("p{i}a"), format!("p{i}b")))
        .collect();
    for (i, x) in all.iter().enumerate() {
        for y in &all[i + 1..] {
            let key = (x.task_id.clone(), y.task_id.clone());
            let rev = (y.task_id.clone(), x.task_id.clone());
            if !planted.contains(&key) && !planted.contains(&rev) {
                non_dup.push(oracle_jaccard(&x.instruction, &y.instruction));
            }
        }
    }
    non_dup.sort_by(f64::total_cmp);
    let median = if non_dup.len() % 2 == 1 {
        non_dup[non_dup.len() / 2]
    } else {
        (non_dup[non_dup.len() / 2 - 1] + non_dup[non_dup.len() / 2]) / 2.0
    };
    let cited = oracle_jaccard(pairs[0].1, pairs[0].2);
    let elapsed = start.elapsed();
    verdict(
        7,
        sizes_kept && idempotent && after < before && cited > median && within(elapsed, 5),
        format!(
            "sizes kept {sizes_kept}, idempotent {idempotent}, max cross-split Jaccard {before:.3} -> {after:.3}, cited pair {cited:.3} vs non-duplicate median {median:.3}; {elapsed:.2?}"
        ),
    );
}

fn golden_demos() -> Vec<Demo> {
    let corpus = generate_corpus(0, 1, 2, 4);
    corpus
        .tasks()
        .take(3)
        .map(|task| {
            let site = corpus.site(&task.site_id).expect("site");
            let traj = oracle_trajectory(site, task).expect("oracle");
            deconstruct_demo(site, task, &traj, 5).expect("demo")
        })
        .collect()
}

#[test]
fn criterion_08_prompt_goldens() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let demos = golden_demos();
    let bless = std::env::var_os("BLESS_GOLDENS").is_some();
    let mut mismatches = Vec::new();
    for n in [0usize, 1, 3] {
        let rendered = build_prompt(BASE_PROMPT, &demos, n, Modality::Multimodal)
            .expect("enough demos")
            .render();
        let path = dir.join(format!("prompt_n{n}.txt"));
        if bless {
            std::fs::create_dir_all(&dir).expect("golden dir");
            std::fs::write(&path, &rendered).expect("write golden");
        }
        match std::fs::read_to_string(&path) {
            Ok(expected) if expected == rendered => {}
            _ => mismatches.push(n),
        }
    }
    verdict(
        8,
        mismatches.is_empty(),
        format!("prompt goldens for n = 0, 1, 3: mismatched {mismatches:?}"),
    );
}

#[test]
fn criterion_09_demo_count_trend() {
    let start = Instant::now();
    let corpus = default_corpus();
    let split = standard_split(&corpus, 0).expect("default split");
    let counts = [1, 3, 5, 10];
    let points = ndemo_trend(&corpus, &split, SplitName::CrossWebsite, &counts, &protocol()).expect("trend runs");
    let values: Vec<f64> = points.iter().map(|p| p.report.metrics.step_sr.mean).collect();
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = increments.iter().all(|d| *d >= 0.0);
    let diminishing = increments.windows(2).all(|w| w[1] <= w[0]);

    // every task sits in the stratum its length implies, and stratum
    // summaries agree with a recount from the per-task rows
    let mut strata_ok = true;
    for p in &points {
        for t in &p.report.tasks {
            strata_ok &= t.report.difficulty.sequence == sequence_difficulty(t.report.steps.len());
        }
        for d in Difficulty::ALL {
            let per_run: Vec<f64> = (0..p.report.n_runs)
                .filter_map(|run| {
                    let subset: Vec<TaskReport> = p
                        .report
                        .tasks
                        .iter()
                        .filter(|t| t.run == run && t.report.difficulty.sequence == d)
                        .map(|t| t.report.clone())
                        .collect();
                    step_success_rate(&subset).ok()
                })
                .collect();
            let expected = (!per_run.is_empty()).then(|| per_run.iter().sum::<f64>() / per_run.len() as f64);
            let reported = p.report.strata.sequence.get(d).map(|m| m.step_sr.mean);
            strata_ok &= match (expected, reported) {
                (Some(e), Some(r)) => (e - r).abs() <= 1e-12,
                (None, None) => true,
                _ => false,
            };
        }
    }
    let elapsed = start.elapsed();
    let shown: Vec<String> = counts.iter().zip(&values).map(|(n, v)| format!("n={n} {v:.3}")).collect();
    verdict(
        9,
        monotone && diminishing && strata_ok && within(elapsed, 120),
        format!(
            "step SR {}; non-decreasing {monotone}, diminishing {diminishing}, strata consistent {strata_ok}; {elapsed:.1?}",
            shown.join(", ")
        ),
    );
}

#[test]
fn criterion_10_environment_soundness() {
    let corpora: Vec<_> = (1..=3).map(|seed| generate_corpus(seed, 3, 4, 8)).collect();
    let mut pool: Vec<(usize, &Task)> = corpora
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.tasks().map(move |t| (i, t)))
        .collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(10));
    pool.truncate(200);
    let mut replayed = 0;
    for (i, task) in &pool {
        let site = corpora[*i].site(&task.site_id).expect("site");
        let ok = oracle_trajectory(site, task)
            .and_then(|traj| replay(site, task, traj.actions()))
            .is_ok_and(|states| states.last().is_some_and(|s| s.success));
        replayed += usize::from(ok);
    }

    let corpus = default_corpus();
    let thresholds = VisualThresholds::from_corpus(&corpus);
    let mut strata_ok = true;
    let mut seen = BTreeSet::new();
    for (len, want) in [(3, Difficulty::Easy), (4, Difficulty::Medium), (10, Difficulty::Hard)] {
        strata_ok &= sequence_difficulty(len) == want;
        for site in corpus.sites() {
            for task in site.tasks.iter().filter(|t| t.oracle_len as usize == len) {
                let traj = oracle_trajectory(site, task).expect("oracle");
                let complexity = trajectory_complexity(site, &traj).into_iter().collect::<Vec<_>>();
                let label = stratify_difficulty(traj.len(), &complexity, thresholds);
                strata_ok &= traj.len() == len && label.sequence == want;
                seen.insert(len);
            }
        }
    }
    strata_ok &= seen.len() == 3;
    verdict(
        10,
        replayed == pool.len() && pool.len() == 200 && strata_ok,
        format!(
            "{replayed}/{} oracle replays succeed; lengths 3/4/10 stratify EASY/MEDIUM/HARD {strata_ok}",
            pool.len()
        ),
    );
}
