//! Report files: aggregate JSON and per-task CSV.

use serde::Serialize;

use super::protocol::AggregateReport;
use super::EvalError;

pub fn report_json(report: &AggregateReport) -> serde_json::Value {
    serde_json::to_value(report).expect("report serializes")
}

#[derive(Debug, Serialize)]
struct TaskRow<'a> {
    run: usize,
    task_id: &'a str,
    site_id: &'a str,
    domain_id: &'a str,
    n_steps: usize,
    ele_acc: f64,
    op_f1: f64,
    step_sr: f64,
    overall_success: bool,
    live_success: Option<bool>,
    sequence: &'static str,
    visual: &'static str,
}

/// One row per scored task per run.
pub fn report_csv(report: &AggregateReport) -> Result<String, EvalError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for t in &report.tasks {
        let r = &t.report;
        let n = r.steps.len().max(1) as f64;
        let frac = |f: fn(&super::metrics::StepRecord) -> bool| r.steps.iter().filter(|s| f(s)).count() as f64 / n;
        writer
            .serialize(TaskRow {
                run: t.run,
                task_id: &r.task_id,
                site_id: &r.site_id,
                domain_id: &r.domain_id,
                n_steps: r.steps.len(),
                ele_acc: frac(|s| s.element_correct),
                op_f1: r.steps.iter().map(|s| s.op_f1).sum::<f64>() / n,
                step_sr: frac(|s| s.step_correct),
                overall_success: r.overall_success,
                live_success: r.live_success,
                sequence: r.difficulty.sequence.as_str(),
                visual: r.difficulty.visual.as_str(),
            })
            .map_err(|e| EvalError::Report(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| EvalError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EvalError::Report(e.to_string()))
}
