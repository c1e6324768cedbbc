//! First-order MAML over any differentiable objective.

use rayon::prelude::*;

/// A loss over parameters and examples with an analytic gradient.
pub trait Objective: Sync {
    type Params: Clone + Send + Sync;
    type Grad: Send;
    type Example: Sync;

    fn loss(&self, params: &Self::Params, batch: &[Self::Example]) -> f64;
    /// Gradient of the mean loss over `batch`.
    fn grad(&self, params: &Self::Params, batch: &[Self::Example]) -> Self::Grad;
    fn zero_grad(&self, params: &Self::Params) -> Self::Grad;
    fn add_grad(&self, acc: &mut Self::Grad, g: &Self::Grad);
    /// `params − lr · grad`.
    fn apply(&self, params: &Self::Params, grad: &Self::Grad, lr: f64) -> Self::Params;
}

/// Inner loop: for each demonstration step in order, `steps_per_example`
/// gradient steps of size `alpha` on that step's loss.
pub fn inner_adapt_with<O: Objective>(
    obj: &O,
    params: &O::Params,
    examples: &[O::Example],
    alpha: f64,
    steps_per_example: usize,
) -> O::Params {
    let mut p = params.clone();
    if alpha == 0.0 {
        return p;
    }
    for i in 0..examples.len() {
        for _ in 0..steps_per_example {
            let g = obj.grad(&p, &examples[i..=i]);
            p = obj.apply(&p, &g, alpha);
        }
    }
    p
}

/// Losses observed during one meta step for one task batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLosses {
    /// Train loss at θ.
    pub inner_before: f64,
    /// Train loss at θ_i.
    pub inner_after: f64,
    /// Test loss at θ_i.
    pub meta: f64,
}

/// One outer update: `θ ← θ − β Σ_i ∇L_test(θ_i)` with every θ_i adapted
/// from θ on its train examples. Batches adapt in parallel; gradients are
/// summed in batch order.
pub fn fomaml_step_with<O: Objective, B>(
    obj: &O,
    params: &O::Params,
    batches: &[B],
    split: impl Fn(&B) -> (&[O::Example], &[O::Example]) + Sync,
    alpha: f64,
    beta: f64,
    steps_per_example: usize,
) -> (O::Params, Vec<BatchLosses>)
where
    B: Sync,
{
    let parts: Vec<(O::Grad, BatchLosses)> = batches
        .par_iter()
        .map(|b| {
            let (train, test) = split(b);
            let adapted = inner_adapt_with(obj, params, train, alpha, steps_per_example);
            let losses = BatchLosses {
                inner_before: obj.loss(params, train),
                inner_after: obj.loss(&adapted, train),
                meta: obj.loss(&adapted, test),
            };
            (obj.grad(&adapted, test), losses)
        })
        .collect();
    let mut acc = obj.zero_grad(params);
    let mut logs = Vec::with_capacity(parts.len());
    for (g, l) in &parts {
        obj.add_grad(&mut acc, g);
        logs.push(*l);
    }
    (obj.apply(params, &acc, beta), logs)
}

/// `L(θ) = mean ½(θ − c)²` over examples `c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticProbe;

impl Objective for QuadraticProbe {
    type Params = f64;
    type Grad = f64;
    type Example = f64;

    fn loss(&self, theta: &f64, batch: &[f64]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch.iter().map(|c| 0.5 * (theta - c).powi(2)).sum::<f64>() / batch.len() as f64
    }

    fn grad(&self, theta: &f64, batch: &[f64]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch.iter().map(|c| theta - c).sum::<f64>() / batch.len() as f64
    }

    fn zero_grad(&self, _: &f64) -> f64 {
        0.0
    }

    fn add_grad(&self, acc: &mut f64, g: &f64) {
        *acc += g;
    }

    fn apply(&self, theta: &f64, g: &f64, lr: f64) -> f64 {
        theta - lr * g
    }
}
