use ndarray::{Array1, Array2, ArrayView2};

use super::ForwardTrace;
use crate::{Error, Result};

/// Negative log-likelihood of `labels[i]` for each row, computed from the
/// logits with a log-sum-exp so it stays accurate near probability one.
pub fn per_sample_nll(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Array1<f64>> {
    check_labels(logits.dim(), labels)?;
    Ok(logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            (lse - row[y]).max(0.0)
        })
        .collect())
}

/// Mean negative log-likelihood over the batch.
pub fn cross_entropy(trace: &ForwardTrace, labels: &[usize]) -> Result<f64> {
    let nll = per_sample_nll(trace.logits.view(), labels)?;
    Ok(mean(&nll))
}

/// Cross-entropy value and its gradient with respect to the logits.
pub fn cross_entropy_grad(trace: &ForwardTrace, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let loss = cross_entropy(trace, labels)?;
    let n = labels.len().max(1) as f64;
    Ok((loss, weighted_nll_grad(&trace.probs, labels, |_| 1.0 / n)))
}

/// Gradient of `Σ_i w(i) · NLL_i` with respect to the logits.
pub(crate) fn weighted_nll_grad(
    probs: &Array2<f64>,
    labels: &[usize],
    weight: impl Fn(usize) -> f64,
) -> Array2<f64> {
    let mut g = probs.clone();
    for (i, (mut row, &y)) in g.rows_mut().into_iter().zip(labels).enumerate() {
        row[y] -= 1.0;
        row *= weight(i);
    }
    g
}

fn check_labels((rows, k): (usize, usize), labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape(format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::data(format!("label {y} out of range for K={k}")));
    }
    Ok(())
}

fn mean(v: &Array1<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.sum() / v.len() as f64
    }
}
