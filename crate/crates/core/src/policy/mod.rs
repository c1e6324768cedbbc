//! A small differentiable action policy with hand-written gradients.
//!
//! Every candidate element and every value span is embedded by one shared
//! tanh layer. Three linear heads read the hidden vectors: an element score
//! per candidate, operation logits from the chosen element, and a value score
//! per span of the chosen element. The loss is the sum of the three negative
//! log-likelihoods, with operation and value conditioned on the gold element.
//!
//! Parameters live in one flat vector laid out as
//! `[W1 (hidden × input) | b1 | w_elem | W_op (3 × hidden) | w_val]`.

mod checkpoint;
mod encode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::webenv::Operation;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use encode::{
    demo_examples, demo_observations, encode_example, oracle_examples, encode_step, CandidateInput, EncodeError, StepExample, StepInput, ValueSpan,
    CANDIDATE_DIM, INPUT_DIM, INSTRUCTION_DIM,
};

pub const DEFAULT_HIDDEN: usize = 32;
const INIT_RANGE: f64 = 0.05;
const N_OPS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Dims, found: Dims },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
}

impl Dims {
    pub fn new(hidden: usize) -> Self {
        Dims {
            input: INPUT_DIM,
            hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden * (3 + N_OPS)
    }

    fn b1(&self) -> usize {
        self.hidden * self.input
    }
    fn w_elem(&self) -> usize {
        self.b1() + self.hidden
    }
    fn w_op(&self) -> usize {
        self.w_elem() + self.hidden
    }
    fn w_val(&self) -> usize {
        self.w_op() + N_OPS * self.hidden
    }
}

/// Views into a flat parameter (or gradient) vector.
struct View<'a> {
    dims: Dims,
    v: &'a [f64],
}

impl<'a> View<'a> {
    fn w1_row(&self, r: usize) -> &'a [f64] {
        let n = self.dims.input;
        &self.v[r * n..(r + 1) * n]
    }
    fn b1(&self) -> &'a [f64] {
        &self.v[self.dims.b1()..self.dims.w_elem()]
    }
    fn w_elem(&self) -> &'a [f64] {
        &self.v[self.dims.w_elem()..self.dims.w_op()]
    }
    fn w_op_row(&self, op: usize) -> &'a [f64] {
        let start = self.dims.w_op() + op * self.dims.hidden;
        &self.v[start..start + self.dims.hidden]
    }
    fn w_val(&self) -> &'a [f64] {
        &self.v[self.dims.w_val()..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub dims: Dims,
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub dims: Dims,
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(dims: Dims) -> Self {
        Gradient {
            dims,
            values: vec![0.0; dims.param_count()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) -> Result<(), PolicyError> {
        check_dims(self.dims, other.dims)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_dims(expected: Dims, found: Dims) -> Result<(), PolicyError> {
    if expected == found {
        Ok(())
    } else {
        Err(PolicyError::ShapeMismatch { expected, found })
    }
}

/// Parameters drawn i.i.d. uniform in (−0.05, 0.05) from a ChaCha8 stream
/// seeded with `seed`, in flat-vector order.
pub fn init_params(seed: u64, hidden: usize) -> PolicyParams {
    let dims = Dims::new(hidden.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..dims.param_count())
        .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
        .collect();
    PolicyParams { dims, seed, values }
}

impl PolicyParams {
    pub fn zeros(dims: Dims, seed: u64) -> Self {
        PolicyParams {
            dims,
            seed,
            values: vec![0.0; dims.param_count()],
        }
    }

    fn view(&self) -> View<'_> {
        View {
            dims: self.dims,
            v: &self.values,
        }
    }

    /// `self − lr · grad`, as a new value.
    pub fn apply_update(&self, grad: &Gradient, lr: f64) -> Result<PolicyParams, PolicyError> {
        check_dims(self.dims, grad.dims)?;
        let values = self
            .values
            .iter()
            .zip(&grad.values)
            .map(|(p, g)| p - lr * g)
            .collect();
        Ok(PolicyParams {
            dims: self.dims,
            seed: self.seed,
            values,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// FNV-1a of the little-endian parameter bytes.
    pub fn fingerprint(&self) -> u64 {
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        crate::text::fnv1a64(&bytes)
    }

    /// Copy with every first-layer weight that reads a layout feature set
    /// to zero.
    pub fn without_layout_weights(&self) -> PolicyParams {
        let mut out = self.clone();
        let n = self.dims.input;
        for r in 0..self.dims.hidden {
            for c in encode::LAYOUT_SLOTS {
                out.values[r * n + c] = 0.0;
            }
        }
        out
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hidden activation for an input split as `head ++ tail` where `tail`
/// starts at column `head.len()`.
fn hidden(view: &View<'_>, head: &[f64], tail: &[f64]) -> Vec<f64> {
    let split = head.len();
    (0..view.dims.hidden)
        .map(|r| {
            let row = view.w1_row(r);
            let pre = dot(&row[..split], head) + dot(&row[split..], tail) + view.b1()[r];
            pre.tanh()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub element: Vec<f64>,
    pub operation: [f64; N_OPS],
    /// Over the value spans of the conditioning element; empty when it has
    /// none.
    pub value: Vec<f64>,
}

struct Activations {
    cand_hidden: Vec<Vec<f64>>,
    elem_probs: Vec<f64>,
    op_probs: Vec<f64>,
    span_hidden: Vec<Vec<f64>>,
    val_probs: Vec<f64>,
}

fn activations(params: &PolicyParams, input: &StepInput, cond: usize, spans: &[ValueSpan]) -> Activations {
    let view = params.view();
    let cand_hidden: Vec<Vec<f64>> = input
        .candidates
        .iter()
        .map(|c| hidden(&view, &c.features, &input.instruction))
        .collect();
    let elem_logits: Vec<f64> = cand_hidden.iter().map(|h| dot(view.w_elem(), h)).collect();
    let elem_probs = softmax(&elem_logits);
    let h = &cand_hidden[cond];
    let op_logits: Vec<f64> = (0..N_OPS).map(|o| dot(view.w_op_row(o), h)).collect();
    let op_probs = softmax(&op_logits);
    let span_hidden: Vec<Vec<f64>> = spans.iter().map(|s| hidden(&view, &s.features, &[])).collect();
    let val_logits: Vec<f64> = span_hidden.iter().map(|h| dot(view.w_val(), h)).collect();
    let val_probs = if spans.is_empty() { Vec::new() } else { softmax(&val_logits) };
    Activations {
        cand_hidden,
        elem_probs,
        op_probs,
        span_hidden,
        val_probs,
    }
}

/// Distributions for a training example; operation and value are
/// conditioned on the gold element.
pub fn forward(params: &PolicyParams, example: &StepExample) -> ActionDistribution {
    let a = activations(params, &example.input, example.gold_element, &example.gold_spans);
    ActionDistribution {
        element: a.elem_probs,
        operation: [a.op_probs[0], a.op_probs[1], a.op_probs[2]],
        value: a.val_probs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub element_index: usize,
    pub element_id: String,
    pub operation: Operation,
    pub value: Option<String>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Greedy action: best element, then its best operation, then (for TYPE and
/// SELECT) its best value span.
pub fn predict(params: &PolicyParams, input: &StepInput) -> Prediction {
    let view = params.view();
    let scores: Vec<f64> = input
        .candidates
        .iter()
        .map(|c| dot(view.w_elem(), &hidden(&view, &c.features, &input.instruction)))
        .collect();
    let element_index = argmax(&scores);
    let spans = input.value_spans(element_index);
    let a = activations(params, input, element_index, &spans);
    let operation = Operation::ALL[argmax(&a.op_probs)];
    let value = if operation.requires_value() {
        Some(if spans.is_empty() {
            String::new()
        } else {
            spans[argmax(&a.val_probs)].text.clone()
        })
    } else {
        None
    };
    Prediction {
        element_index,
        element_id: input.candidates[element_index].element_id.clone(),
        operation,
        value,
    }
}

/// Sum of the element, operation and (when the gold value is among the
/// spans) value negative log-likelihoods.
pub fn loss(params: &PolicyParams, example: &StepExample) -> f64 {
    let d = forward(params, example);
    let mut total = -d.element[example.gold_element].ln() - d.operation[example.gold_operation.index()].ln();
    if let Some(v) = example.gold_value {
        total -= d.value[v].ln();
    }
    total
}

pub fn mean_loss(params: &PolicyParams, batch: &[StepExample]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch.iter().map(|e| loss(params, e)).sum::<f64>() / batch.len() as f64
}

/// Accumulates `delta ⊗ (head ++ tail)` into the first layer.
fn backprop_hidden(g: &mut [f64], dims: Dims, h: &[f64], dh: &[f64], head: &[f64], tail: &[f64]) {
    let split = head.len();
    for r in 0..dims.hidden {
        let delta = dh[r] * (1.0 - h[r] * h[r]);
        if delta == 0.0 {
            continue;
        }
        let row = &mut g[r * dims.input..(r + 1) * dims.input];
        for (gi, x) in row[..split].iter_mut().zip(head) {
            *gi += delta * x;
        }
        for (gi, x) in row[split..].iter_mut().zip(tail) {
            *gi += delta * x;
        }
        g[dims.b1() + r] += delta;
    }
}

fn example_grad(params: &PolicyParams, ex: &StepExample) -> Vec<f64> {
    let dims = params.dims;
    let view = params.view();
    let a = activations(params, &ex.input, ex.gold_element, &ex.gold_spans);
    let mut g = vec![0.0; dims.param_count()];

    let mut dh_cand: Vec<Vec<f64>> = vec![vec![0.0; dims.hidden]; a.cand_hidden.len()];
    for (c, h) in a.cand_hidden.iter().enumerate() {
        let d = a.elem_probs[c] - if c == ex.gold_element { 1.0 } else { 0.0 };
        for r in 0..dims.hidden {
            g[dims.w_elem() + r] += d * h[r];
            dh_cand[c][r] += d * view.w_elem()[r];
        }
    }

    let h_gold = &a.cand_hidden[ex.gold_element];
    for o in 0..N_OPS {
        let d = a.op_probs[o] - if o == ex.gold_operation.index() { 1.0 } else { 0.0 };
        let row = view.w_op_row(o);
        for r in 0..dims.hidden {
            g[dims.w_op() + o * dims.hidden + r] += d * h_gold[r];
            dh_cand[ex.gold_element][r] += d * row[r];
        }
    }

    for (c, cand) in ex.input.candidates.iter().enumerate() {
        backprop_hidden(&mut g, dims, &a.cand_hidden[c], &dh_cand[c], &cand.features, &ex.input.instruction);
    }

    if let Some(gold_v) = ex.gold_value {
        for (v, h) in a.span_hidden.iter().enumerate() {
            let d = a.val_probs[v] - if v == gold_v { 1.0 } else { 0.0 };
            let dh: Vec<f64> = view.w_val().iter().map(|w| d * w).collect();
            for r in 0..dims.hidden {
                g[dims.w_val() + r] += d * h[r];
            }
            backprop_hidden(&mut g, dims, h, &dh, &ex.gold_spans[v].features, &[]);
        }
    }
    g
}

/// Gradient of the mean loss over `batch`. Per-example gradients may be
/// computed in parallel; they are summed in ascending example order.
pub fn grad(params: &PolicyParams, batch: &[StepExample]) -> Result<Gradient, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let parts: Vec<Vec<f64>> = batch.par_iter().map(|ex| example_grad(params, ex)).collect();
    let mut out = Gradient::zeros(params.dims);
    for part in &parts {
        for (a, b) in out.values.iter_mut().zip(part) {
            *a += b;
        }
    }
    out.scale(1.0 / batch.len() as f64);
    Ok(out)
}
