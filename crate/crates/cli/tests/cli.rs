//! The `adaptagent` binary driven as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

use adaptagent::demostore::{save, Annotator, TrajectoryRecord};
use adaptagent::webenv::{oracle_trajectory, Corpus};
use serde_json::Value;

fn adaptagent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptagent")).args(args).output().expect("spawn adaptagent")
}

fn ok(args: &[&str]) -> Output {
    let out = adaptagent(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(out.stderr.trim_ascii()).expect("stderr is one JSON object")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small corpus with every split populated.
fn small_corpus(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("corpus");
    ok(&[
        "gen-corpus",
        "--domains",
        "3",
        "--sites-per-domain",
        "4",
        "--tasks-per-site",
        "4",
        "--held-out-sites",
        "1",
        "--held-out-domains",
        "1",
        "--cross-task-per-site",
        "1",
        "--seed",
        "5",
        "--out",
        p(&out),
    ]);
    out
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let out = adaptagent(&["meta-train", "--corpus", "c.json", "--strategy", "sideways", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("sideways"));
}

#[test]
fn zero_jobs_is_rejected() {
    let out = adaptagent(&["--jobs", "0", "experiment", "gain", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn malformed_corpus_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.json");
    std::fs::write(&corpus, "{\"sites\": 3}").unwrap();
    let out = adaptagent(&["eval", "--corpus", p(&corpus), "--arm", "icl-n-demos", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "validation");
}

#[test]
fn policy_arm_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let out = adaptagent(&[
        "eval",
        "--corpus",
        p(&data.join("corpus.json")),
        "--arm",
        "policy-ft-de",
        "--out",
        p(&dir.path().join("eval")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_corpus_is_deterministic_and_complete() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = small_corpus(a.path());
    let db = small_corpus(b.path());
    for file in ["corpus.json", "split.json"] {
        assert_eq!(
            std::fs::read(da.join(file)).unwrap(),
            std::fs::read(db.join(file)).unwrap(),
            "{file} differs between identical invocations"
        );
    }
    let (mut pa, mut pb) = (read_json(&da.join("provenance.json")), read_json(&db.join("provenance.json")));
    pa.as_object_mut().unwrap().remove("command");
    pb.as_object_mut().unwrap().remove("command");
    assert_eq!(pa, pb);
    let split = read_json(&da.join("split.json"));
    for name in ["train", "cross_task", "cross_website", "cross_domain"] {
        let tasks = read_json(&da.join("tasks").join(format!("{name}.json")));
        assert_eq!(tasks.as_array().unwrap().len(), split[name].as_array().unwrap().len(), "{name}");
    }
    let corpus: Corpus = serde_json::from_str(&std::fs::read_to_string(da.join("corpus.json")).unwrap()).unwrap();
    let prov = read_json(&da.join("provenance.json"));
    assert_eq!(prov["corpus_digest"], format!("{:016x}", corpus.digest()));
}

#[test]
fn dedup_writes_amended_sets() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let out = dir.path().join("dedup");
    ok(&[
        "dedup",
        "--train",
        p(&data.join("tasks/train.json")),
        "--cross-task",
        p(&data.join("tasks/cross_task.json")),
        "--out",
        p(&out),
    ]);
    let train = read_json(&out.join("train.json"));
    let cross = read_json(&out.join("cross_task.json"));
    let before = read_json(&data.join("tasks/train.json")).as_array().unwrap().len()
        + read_json(&data.join("tasks/cross_task.json")).as_array().unwrap().len();
    assert_eq!(train.as_array().unwrap().len() + cross.as_array().unwrap().len(), before);
    let summary = read_json(&out.join("dedup.json"));
    assert!(summary["max_similarity_after"].as_f64().unwrap() <= summary["max_similarity_before"].as_f64().unwrap());
}

#[test]
fn train_adapt_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let corpus_file = data.join("corpus.json");
    let meta = dir.path().join("meta");
    ok(&["meta-train", "--corpus", p(&corpus_file), "--epochs", "2", "--out", p(&meta)]);
    let log = read_json(&meta.join("meta_log.json"));
    assert_eq!(log["epoch_meta_losses"].as_array().unwrap().len(), 2);

    let ft = dir.path().join("ft");
    ok(&["finetune", "--corpus", p(&corpus_file), "--mode", "de", "--epochs", "2", "--out", p(&ft)]);
    assert!(ft.join("theta.ckpt").exists());

    // Adapt on a recorded demonstration of a cross-website task.
    let corpus: Corpus = serde_json::from_str(&std::fs::read_to_string(&corpus_file).unwrap()).unwrap();
    let split = read_json(&data.join("split.json"));
    let task_id = split["cross_website"][0].as_str().unwrap();
    let (site, task) = corpus.find_task(task_id).unwrap();
    let gold = oracle_trajectory(site, task).unwrap();
    let actions: Vec<_> = gold.actions().cloned().collect();
    let record =
        TrajectoryRecord::from_actions(site, task, &actions, Annotator::Human, "2024-01-01T00:00:00Z").unwrap();
    let demo = dir.path().join("one.demo.json");
    save(&record, &demo).unwrap();
    let adapted = dir.path().join("adapted");
    ok(&[
        "adapt",
        "--corpus",
        p(&corpus_file),
        "--checkpoint",
        p(&meta.join("theta.ckpt")),
        "--demos",
        p(&demo),
        "--out",
        p(&adapted),
    ]);
    assert!(adapted.join("adapted.ckpt").exists());

    let eval = dir.path().join("eval");
    ok(&[
        "eval",
        "--corpus",
        p(&corpus_file),
        "--arm",
        "policy-fomaml",
        "--checkpoint",
        p(&adapted.join("adapted.ckpt")),
        "--split",
        "cross-website",
        "--runs",
        "1",
        "--out",
        p(&eval),
    ]);
    let report = read_json(&eval.join("report.json"));
    assert_eq!(report["n_runs"], 1);
    for metric in ["ele_acc", "op_f1", "step_sr", "overall_sr"] {
        assert_eq!(report["metrics"][metric]["std"], 0.0, "{metric}");
    }
    assert_eq!(report["provenance"]["corpus_digest"], format!("{:016x}", corpus.digest()));
    let csv = std::fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(csv.starts_with("run,task_id,"));
}

#[test]
fn adapt_rejects_targets_from_two_domains() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let corpus_file = data.join("corpus.json");
    let meta = dir.path().join("meta");
    ok(&["meta-train", "--corpus", p(&corpus_file), "--epochs", "1", "--out", p(&meta)]);
    let corpus: Corpus = serde_json::from_str(&std::fs::read_to_string(&corpus_file).unwrap()).unwrap();
    let mut seen = Vec::new();
    for t in corpus.tasks() {
        if !seen.iter().any(|(d, _): &(String, String)| *d == t.domain_id) {
            seen.push((t.domain_id.clone(), t.task_id.clone()));
        }
    }
    let ids = format!("{},{}", seen[0].1, seen[1].1);
    let out = adaptagent(&[
        "adapt",
        "--corpus",
        p(&corpus_file),
        "--checkpoint",
        p(&meta.join("theta.ckpt")),
        "--oracle",
        &ids,
        "--out",
        p(&dir.path().join("adapted")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "validation");
}

#[test]
fn icl_eval_with_simulated_client() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_corpus(dir.path());
    let out = dir.path().join("icl");
    ok(&[
        "icl-eval",
        "--corpus",
        p(&data.join("corpus.json")),
        "--split",
        "cross-task",
        "--runs",
        "2",
        "--n-demos",
        "1",
        "--out",
        p(&out),
    ]);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["arm"], "ICL_N_DEMOS");
    assert_eq!(report["n_runs"], 2);
}
