//! Subcommand implementations.
//!
//! Artifacts per subcommand (all under `--out`):
//!
//! | subcommand | files |
//! |---|---|
//! | `gen-corpus` | `corpus.json`, `split.json`, `tasks/{train,cross_task,cross_website,cross_domain}.json` |
//! | `dedup` | `train.json`, `cross_task.json`, `dedup.json` |
//! | `meta-train` | `theta.ckpt`, `meta_log.json` |
//! | `finetune` | `theta.ckpt`, `finetune_log.json` |
//! | `adapt` | `adapted.ckpt` |
//! | `eval`, `icl-eval` | `report.json`, `report.csv` |
//! | `experiment` | `experiment.json` |
//!
//! Each also writes `provenance.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use adaptagent::demostore::{self, TrajectoryRecord};
use adaptagent::evalkit::{
    amend_splits, default_split, max_cross_split_similarity, report_csv, report_json, run_protocol, AgentModel,
    AggregateReport, Arm, EvalError, ProtocolConfig, SplitName, SplitSpec,
};
use adaptagent::experiments::{
    adaptation_gain, default_corpus, hidden_duplicate_corpus, modality_gap, ndemo_trend, standard_split,
    strategy_comparison, TrainingConfig,
};
use adaptagent::icl::{AgentClient, MockClient, SimulatedClient};
use adaptagent::metatrain::{adapt_to_target, finetune, finetune_tasks, meta_train, DemoBank, MetaConfig, MetaError};
use adaptagent::observation::Modality;
use adaptagent::policy::{init_params, load_checkpoint, save_checkpoint, PolicyParams};
use adaptagent::webenv::{generate_corpus_with, Corpus, CorpusProfile, Task};
use adaptagent_recorder::RecorderConfig;
use serde::Serialize;
use serde_json::{json, Value};

use crate::client::HttpClient;
use crate::{
    AdaptArgs, ClientArgs, ClientKind, Cli, CliError, Command, CorpusArgs, DedupArgs, EvalArgs, ExperimentArgs,
    ExperimentName, FinetuneArgs, GenCorpusArgs, IclEvalArgs, MetaTrainArgs, ServeArgs,
};

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Dedup(a) => dedup(a),
        Command::MetaTrain(a) => meta_train_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Adapt(a) => adapt(a),
        Command::Eval(a) => eval(a),
        Command::IclEval(a) => icl_eval(a),
        Command::Serve(a) => serve(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn digest_hex(corpus: &Corpus) -> String {
    format!("{:016x}", corpus.digest())
}

fn provenance(config: Value, seeds: Value, corpus: Option<&Corpus>) -> Value {
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": std::env::args().skip(1).collect::<Vec<_>>(),
        "config": config,
        "seeds": seeds,
        "corpus_digest": corpus.map(digest_hex),
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    write_text(path, &format!("{text}\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    let corpus: Corpus = read_json(path)?;
    for site in corpus.sites() {
        site.check_invariants()
            .map_err(|e| CliError::validation(format!("site {}: {e}", site.site_id)))?;
    }
    Ok(corpus)
}

/// The split named on the command line, the `split.json` beside the corpus,
/// or the standard split.
fn load_split(data: &CorpusArgs, corpus: &Corpus) -> CliResult<SplitSpec> {
    let beside = data.corpus.with_file_name("split.json");
    let split = match &data.split_file {
        Some(path) => read_json(path)?,
        None if beside.exists() => read_json(&beside)?,
        None => standard_split(corpus, 0).map_err(CliError::validation)?,
    };
    split.validate(corpus).map_err(CliError::validation)?;
    Ok(split)
}

fn load_params(path: &Path) -> CliResult<PolicyParams> {
    load_checkpoint(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn store_params(params: &PolicyParams, path: &Path) -> CliResult<()> {
    save_checkpoint(params, path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn meta_error(e: MetaError) -> CliError {
    match e {
        MetaError::InvalidConfig(_) | MetaError::InvalidDemonstration { .. } | MetaError::MixedTargets(_) => {
            CliError::validation(e)
        }
        other => CliError::runtime(other),
    }
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::InvalidSplit(_) | EvalError::InvalidConfig(_) | EvalError::ArmMismatch(_) => CliError::validation(e),
        EvalError::Meta(m) => meta_error(m),
        other => CliError::runtime(other),
    }
}

fn gen_corpus(a: &GenCorpusArgs) -> CliResult<()> {
    if a.domains == 0 || a.sites_per_domain == 0 || a.tasks_per_site == 0 {
        return Err(CliError::validation("domains, sites and tasks must all be positive"));
    }
    if a.house_style > 100 {
        return Err(CliError::validation("--house-style is a percentage"));
    }
    let profile = CorpusProfile {
        seed: a.seed,
        n_domains: a.domains,
        sites_per_domain: a.sites_per_domain,
        tasks_per_site: a.tasks_per_site,
        hidden_duplicates: a.hidden_duplicates,
        house_style_percent: a.house_style,
    };
    let corpus = generate_corpus_with(&profile);
    let split = default_split(&corpus, a.held_out_sites, a.held_out_domains, a.cross_task_per_site, a.seed)
        .map_err(CliError::validation)?;
    ensure_dir(&a.out)?;
    write_text(&a.out.join("corpus.json"), &format!("{}\n", corpus.to_canonical_json()))?;
    write_json(&a.out.join("split.json"), &split)?;
    let tasks_dir = a.out.join("tasks");
    ensure_dir(&tasks_dir)?;
    let index = corpus.index();
    let lookup = |ids: &[String]| -> Vec<Task> { ids.iter().filter_map(|id| index.task(id)).map(|(_, t)| t.clone()).collect() };
    write_json(&tasks_dir.join("train.json"), &lookup(&split.train))?;
    for which in SplitName::ALL {
        write_json(&tasks_dir.join(format!("{which}.json")), &lookup(split.tasks(which)))?;
    }
    let config = json!({
        "profile": profile,
        "held_out_sites": a.held_out_sites,
        "held_out_domains": a.held_out_domains,
        "cross_task_per_site": a.cross_task_per_site,
    });
    write_json(&a.out.join("provenance.json"), &provenance(config, json!({ "corpus": a.seed, "split": a.seed }), Some(&corpus)))?;
    println!(
        "{} sites, {} tasks, digest {}",
        corpus.sites().count(),
        corpus.tasks().count(),
        digest_hex(&corpus)
    );
    Ok(())
}

fn dedup(a: &DedupArgs) -> CliResult<()> {
    let train: Vec<Task> = read_json(&a.train)?;
    let cross: Vec<Task> = read_json(&a.cross_task)?;
    let before = max_cross_split_similarity(&train, &cross);
    let (new_train, new_cross) = amend_splits(&train, &cross);
    let after = max_cross_split_similarity(&new_train, &new_cross);
    ensure_dir(&a.out)?;
    write_json(&a.out.join("train.json"), &new_train)?;
    write_json(&a.out.join("cross_task.json"), &new_cross)?;
    let summary = json!({
        "train": new_train.len(),
        "cross_task": new_cross.len(),
        "max_similarity_before": before,
        "max_similarity_after": after,
    });
    write_json(&a.out.join("dedup.json"), &summary)?;
    let config = json!({ "train": a.train, "cross_task": a.cross_task });
    write_json(&a.out.join("provenance.json"), &provenance(config, json!({}), None))?;
    println!("max same-website similarity {before:.3} -> {after:.3}");
    Ok(())
}

fn meta_train_cmd(a: &MetaTrainArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.data.corpus)?;
    let split = load_split(&a.data, &corpus)?;
    let config = MetaConfig {
        alpha: a.alpha,
        beta: a.beta,
        inner_steps_per_demo_step: a.inner_steps,
        strategy: a.strategy,
        meta_epochs: a.epochs,
        seed: a.seed,
        hidden: a.hidden,
        ..MetaConfig::default()
    };
    config.validate().map_err(meta_error)?;
    let train = split.train_corpus(&corpus);
    let modality = Modality::from(a.modality);
    let bank = DemoBank::new(&train, modality);
    let outcome = meta_train(&train, &config, &bank).map_err(meta_error)?;
    ensure_dir(&a.out)?;
    store_params(&outcome.params, &a.out.join("theta.ckpt"))?;
    let log = json!({
        "epoch_meta_losses": outcome.epoch_meta_losses(),
        "log": outcome.log,
        "batches": outcome.batches,
    });
    write_json(&a.out.join("meta_log.json"), &log)?;
    let prov = provenance(json!({ "meta": config, "modality": modality, "split": split }), json!({ "init": a.seed }), Some(&corpus));
    write_json(&a.out.join("provenance.json"), &prov)?;
    println!("meta-trained {} epochs with {}", a.epochs, a.strategy);
    Ok(())
}

fn finetune_cmd(a: &FinetuneArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.data.corpus)?;
    let split = load_split(&a.data, &corpus)?;
    let config = MetaConfig {
        alpha: a.lr,
        strategy: a.strategy,
        meta_epochs: a.epochs,
        seed: a.seed,
        hidden: a.hidden,
        ..MetaConfig::default()
    };
    config.validate().map_err(meta_error)?;
    let train = split.train_corpus(&corpus);
    let modality = Modality::from(a.modality);
    let bank = DemoBank::new(&train, modality);
    let tasks = finetune_tasks(&train, a.mode, &config).map_err(meta_error)?;
    let outcome = finetune(&init_params(a.seed, a.hidden), &tasks, &bank, a.lr, a.epochs, a.seed).map_err(meta_error)?;
    ensure_dir(&a.out)?;
    store_params(&outcome.params, &a.out.join("theta.ckpt"))?;
    write_json(
        &a.out.join("finetune_log.json"),
        &json!({ "epoch_losses": outcome.epoch_losses, "tasks": tasks }),
    )?;
    let prov = provenance(
        json!({ "mode": a.mode, "config": config, "modality": modality, "split": split }),
        json!({ "init": a.seed, "shuffle": a.seed }),
        Some(&corpus),
    );
    write_json(&a.out.join("provenance.json"), &prov)?;
    println!("fine-tuned on {} task demonstrations", tasks.len());
    Ok(())
}

fn adapt(a: &AdaptArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus)?;
    let theta = load_params(&a.checkpoint)?;
    let modality = Modality::from(a.modality);
    let (records, task_ids): (Vec<TrajectoryRecord>, Vec<String>) = if !a.demos.is_empty() {
        let records = a
            .demos
            .iter()
            .map(|p| demostore::load(p).map_err(|e| CliError::validation(format!("{}: {e}", p.display()))))
            .collect::<CliResult<Vec<_>>>()?;
        let ids = records.iter().map(|r| r.task_id.clone()).collect();
        (records, ids)
    } else if !a.oracle.is_empty() {
        (Vec::new(), a.oracle.clone())
    } else {
        return Err(CliError::usage("adapt needs --demos <files> or --oracle <task ids>"));
    };
    let tasks = task_ids
        .iter()
        .map(|id| {
            corpus
                .find_task(id)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| CliError::validation(format!("unknown task {id}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let bank = DemoBank::new(&corpus, modality).with_records(&records).map_err(meta_error)?;
    let adapted = adapt_to_target(&theta, &tasks, &bank, a.alpha, a.inner_steps).map_err(meta_error)?;
    ensure_dir(&a.out)?;
    store_params(&adapted, &a.out.join("adapted.ckpt"))?;
    let config = json!({
        "checkpoint": a.checkpoint,
        "demos": a.demos,
        "oracle": a.oracle,
        "alpha": a.alpha,
        "inner_steps": a.inner_steps,
        "modality": modality,
    });
    write_json(&a.out.join("provenance.json"), &provenance(config, json!({}), Some(&corpus)))?;
    println!("adapted on {} demonstrations", tasks.len());
    Ok(())
}

fn build_client(args: &ClientArgs) -> CliResult<Box<dyn AgentClient>> {
    Ok(match args.client {
        ClientKind::Mock => {
            let path = args.script.as_ref().ok_or_else(|| CliError::usage("--client mock needs --script"))?;
            Box::new(MockClient::load_script(path, args.cyclic).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?)
        }
        ClientKind::Simulated => Box::new(SimulatedClient),
        ClientKind::Http => {
            let endpoint = args.endpoint.as_ref().ok_or_else(|| CliError::usage("--client http needs --endpoint"))?;
            Box::new(HttpClient::new(endpoint.clone()))
        }
    })
}

fn write_report(out: &Path, report: &AggregateReport, prov: Value) -> CliResult<()> {
    ensure_dir(out)?;
    let mut body = report_json(report);
    body["provenance"] = prov.clone();
    write_json(&out.join("report.json"), &body)?;
    write_text(&out.join("report.csv"), &report_csv(report).map_err(eval_error)?)?;
    write_json(&out.join("provenance.json"), &prov)?;
    let m = &report.metrics;
    println!(
        "{} {}: ele_acc {:.4}±{:.4} op_f1 {:.4}±{:.4} step_sr {:.4}±{:.4} overall_sr {:.4}±{:.4}",
        report.arm,
        report.split,
        m.ele_acc.mean,
        m.ele_acc.std,
        m.op_f1.mean,
        m.op_f1.std,
        m.step_sr.mean,
        m.step_sr.std,
        m.overall_sr.mean,
        m.overall_sr.std
    );
    Ok(())
}

struct EvalPlan<'a> {
    data: &'a CorpusArgs,
    arm: Arm,
    which: SplitName,
    protocol: ProtocolConfig,
    checkpoint: Option<&'a PathBuf>,
    agent: &'a ClientArgs,
    out: &'a Path,
}

fn evaluate(plan: EvalPlan<'_>) -> CliResult<()> {
    if plan.protocol.n_runs == 0 {
        return Err(CliError::validation("--runs must be at least 1"));
    }
    let corpus = load_corpus(&plan.data.corpus)?;
    let split = load_split(plan.data, &corpus)?;
    let modality = Modality::from(plan.agent.modality);
    let bank = DemoBank::new(&corpus, modality);
    let report = if plan.arm.is_policy() {
        let path = plan
            .checkpoint
            .ok_or_else(|| CliError::usage(format!("arm {} needs --checkpoint", plan.arm)))?;
        let params = load_params(path)?;
        run_protocol(plan.arm, AgentModel::Policy(&params), &bank, &split, plan.which, &plan.protocol)
    } else {
        let client = build_client(plan.agent)?;
        run_protocol(plan.arm, AgentModel::Client(client.as_ref()), &bank, &split, plan.which, &plan.protocol)
    }
    .map_err(eval_error)?;
    let config = json!({
        "arm": plan.arm,
        "split": plan.which,
        "protocol": plan.protocol,
        "modality": modality,
        "checkpoint": plan.checkpoint,
        "client": format!("{:?}", plan.agent.client).to_lowercase(),
        "script": plan.agent.script,
        "endpoint": plan.agent.endpoint,
        "split_spec": split,
    });
    let prov = provenance(config, json!({ "protocol": plan.protocol.seed }), Some(&corpus));
    write_report(plan.out, &report, prov)
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let protocol = ProtocolConfig {
        n_runs: a.runs,
        seed: a.seed,
        mode: a.mode.into(),
        n_adapt_tasks: a.n_adapt_tasks,
        alpha: a.alpha,
        inner_steps: a.inner_steps,
        n_demos: a.agent.n_demos,
        ..ProtocolConfig::default()
    };
    evaluate(EvalPlan {
        data: &a.data,
        arm: a.arm,
        which: a.which,
        protocol,
        checkpoint: a.checkpoint.as_ref(),
        agent: &a.agent,
        out: &a.out,
    })
}

fn icl_eval(a: &IclEvalArgs) -> CliResult<()> {
    let protocol = ProtocolConfig {
        n_runs: a.runs,
        seed: a.seed,
        mode: a.mode.into(),
        n_demos: a.agent.n_demos,
        ..ProtocolConfig::default()
    };
    evaluate(EvalPlan {
        data: &a.data,
        arm: Arm::IclNDemos,
        which: a.which,
        protocol,
        checkpoint: None,
        agent: &a.agent,
        out: &a.out,
    })
}

fn serve(a: &ServeArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus)?;
    let config = RecorderConfig {
        ttl: Duration::from_secs(a.ttl_minutes * 60),
        ..RecorderConfig::new(&a.demos_dir)
    };
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    eprintln!("recorder listening on http://{addr}");
    runtime
        .block_on(adaptagent_recorder::serve(corpus, config, addr))
        .map_err(CliError::runtime)
}

fn experiment(a: &ExperimentArgs) -> CliResult<()> {
    let training = TrainingConfig {
        seed: a.seed,
        ..TrainingConfig::default()
    };
    let protocol = ProtocolConfig::default();
    let corpus = match a.name {
        ExperimentName::Modality => hidden_duplicate_corpus(),
        _ => default_corpus(),
    };
    let split = standard_split(&corpus, 0).map_err(eval_error)?;
    let result = match a.name {
        ExperimentName::Gain => serde_json::to_value(adaptation_gain(&corpus, &split, &training, &protocol).map_err(eval_error)?),
        ExperimentName::Strategies => {
            serde_json::to_value(strategy_comparison(&corpus, &split, &training, &protocol).map_err(eval_error)?)
        }
        ExperimentName::Modality => serde_json::to_value(modality_gap(&corpus, &split, &training, &protocol).map_err(eval_error)?),
        ExperimentName::Trend => serde_json::to_value(
            ndemo_trend(&corpus, &split, SplitName::CrossWebsite, &[1, 3, 5, 10], &protocol).map_err(eval_error)?,
        ),
    }
    .map_err(CliError::runtime)?;
    ensure_dir(&a.out)?;
    let prov = provenance(
        json!({ "experiment": format!("{:?}", a.name).to_lowercase(), "training": training, "protocol": protocol }),
        json!({ "training": a.seed, "protocol": protocol.seed }),
        Some(&corpus),
    );
    write_json(&a.out.join("experiment.json"), &json!({ "results": result, "provenance": prov }))?;
    write_json(&a.out.join("provenance.json"), &prov)?;
    println!("wrote {}", a.out.join("experiment.json").display());
    Ok(())
}
