use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{Dataset, ModelGraph, Subset};

use super::exec::{argmax, infer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub top1_accuracy: f64,
    /// Baseline minus candidate accuracy, in percentage points.
    pub accuracy_drop: f64,
    pub samples_evaluated: usize,
    pub correct: usize,
}

impl EvalResult {
    /// Re-expresses this result as a drop against `baseline`.
    pub fn against(mut self, baseline: &EvalResult) -> Self {
        self.accuracy_drop = drop_pp(baseline.correct, baseline.samples_evaluated, self.correct, self.samples_evaluated);
        self
    }
}

/// Accuracy difference in percentage points, computed from the counts so that
/// equal counts give exactly zero.
fn drop_pp(base_ok: usize, base_n: usize, ok: usize, n: usize) -> f64 {
    if base_n == n {
        (base_ok as f64 - ok as f64) * 100.0 / n as f64
    } else {
        (base_ok as f64 / base_n as f64 - ok as f64 / n as f64) * 100.0
    }
}

/// Predicted classes for every sample in `subset`, in dataset order.
pub fn predict(model: &ModelGraph, dataset: &Dataset, subset: Subset) -> Result<Vec<usize>> {
    dataset.check_compatible(model)?;
    dataset
        .range(subset)
        .into_par_iter()
        .map(|i| infer(model, dataset.sample(i)).map(|y| argmax(&y)))
        .collect()
}

/// Top-1 accuracy over `subset`; the drop is taken against `baseline` when given.
pub fn evaluate_accuracy(
    model: &ModelGraph,
    dataset: &Dataset,
    subset: Subset,
    baseline: Option<&EvalResult>,
) -> Result<EvalResult> {
    let range = dataset.range(subset);
    if range.is_empty() {
        return Err(Error::InvalidConfig(format!("the {} subset is empty", subset.as_str())));
    }
    let preds = predict(model, dataset, subset)?;
    let correct = preds
        .iter()
        .zip(range.clone())
        .filter(|&(&p, i)| p == dataset.label(i) as usize)
        .count();
    let res = EvalResult {
        top1_accuracy: correct as f64 / range.len() as f64,
        accuracy_drop: 0.0,
        samples_evaluated: range.len(),
        correct,
    };
    Ok(match baseline {
        Some(b) => res.against(b),
        None => res,
    })
}
