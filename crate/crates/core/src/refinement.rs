//! Self-paced training of the target-only auxiliary network and the
//! confidence check that filters pseudo-labels.
//!
//! At refinement epoch `n` a sample is used iff its negative log-likelihood
//! under the auxiliary network is at most `γⁿ λ`. The threshold grows each
//! epoch so harder samples enter gradually. The network never sees source
//! data.

use ndarray::{Array1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::assignment::PseudoLabelSet;
use crate::model::{per_sample_nll, sgd_step, weighted_nll_grad, ForwardTrace, NetworkParams, OptimizerState, Upstream};
use crate::{Error, Result, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfPacedSchedule {
    /// Base NLL threshold.
    pub lambda: f64,
    /// Per-epoch growth factor of the threshold.
    pub gamma: f64,
    pub n: usize,
    pub n_max: usize,
}

impl Default for SelfPacedSchedule {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 1.3,
            n: 0,
            n_max: 10,
        }
    }
}

impl SelfPacedSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("lambda must be > 0"));
        }
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::config("gamma must be > 1"));
        }
        if self.n > self.n_max {
            return Err(Error::config(format!("epoch {} beyond n_max {}", self.n, self.n_max)));
        }
        Ok(())
    }

    /// `γⁿ λ`.
    pub fn threshold(&self) -> f64 {
        self.gamma.powi(self.n as i32) * self.lambda
    }

    pub fn at(self, n: usize) -> Self {
        Self { n, ..self }
    }
}

/// Which target samples take part in the current epoch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionMask {
    pub v: Vec<bool>,
}

impl SelectionMask {
    pub fn count(&self) -> usize {
        self.v.iter().filter(|&&b| b).count()
    }

    pub fn all(&self) -> bool {
        self.v.iter().all(|&b| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.v.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

/// Closed-form minimizer of the self-paced objective over the binary mask:
/// `v_i = 1` exactly when `nll_i ≤ γⁿ λ`.
pub fn select(nlls: &[f64], schedule: &SelfPacedSchedule) -> Result<SelectionMask> {
    let thr = schedule.threshold();
    if let Some((i, &bad)) = nlls.iter().enumerate().find(|(_, &x)| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::data(format!("sample {i} has invalid NLL {bad}")));
    }
    Ok(SelectionMask {
        v: nlls.iter().map(|&x| x <= thr).collect(),
    })
}

/// `(Σ v_i NLL_i − thr Σ v_i) / n_total` for one forward pass, with the
/// gradient with respect to the logits. The mask is held fixed.
pub fn self_paced_loss(
    trace: &ForwardTrace,
    labels: &[usize],
    mask: &[bool],
    threshold: f64,
    n_total: usize,
) -> Result<(f64, ndarray::Array2<f64>)> {
    if mask.len() != labels.len() {
        return Err(Error::shape("mask and labels differ in length"));
    }
    let nll = per_sample_nll(trace.logits.view(), labels)?;
    let n_total = n_total.max(1) as f64;
    let selected: f64 = mask.iter().filter(|&&b| b).count() as f64;
    let data: f64 = nll.iter().zip(mask).filter(|(_, &b)| b).map(|(x, _)| x).sum();
    let value = (data - threshold * selected) / n_total;
    let grad = weighted_nll_grad(&trace.probs, labels, |i| if mask[i] { 1.0 / n_total } else { 0.0 });
    Ok((value, grad))
}

/// Diagnostics of one refinement epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineEpoch {
    pub n: usize,
    pub threshold: f64,
    pub selected: usize,
    pub mean_nll: f64,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub params: NetworkParams,
    /// Selection under the trained parameters at the final threshold.
    pub mask: SelectionMask,
    pub epochs: Vec<RefineEpoch>,
}

/// Trains the auxiliary network on pseudo-labeled target data.
///
/// Epochs start at `n = schedule.n`. Each epoch first re-selects samples
/// against `γⁿ λ` using the current parameters, then makes one shuffled
/// mini-batch pass of SGD over the selected samples. An empty selection
/// skips the pass but still advances `n`. Training stops after the first
/// epoch with `n ≥ n_max` whose selection covered every sample; since the
/// threshold grows geometrically this always happens for finite NLLs.
pub fn refine(
    aux: NetworkParams,
    target: ArrayView2<'_, f64>,
    pseudo: &PseudoLabelSet,
    schedule: SelfPacedSchedule,
    optimizer: &mut OptimizerState,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<RefineOutcome> {
    schedule.validate()?;
    if pseudo.len() != target.nrows() {
        return Err(Error::shape(format!(
            "{} pseudo-labels for {} target samples",
            pseudo.len(),
            target.nrows()
        )));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let n_total = target.nrows();
    let mut params = aux;
    let mut epochs = Vec::new();

    let mut n = schedule.n;
    loop {
        let sched = schedule.at(n);
        let nlls = target_nll(&params, target, &pseudo.labels)?;
        let mask = select(nlls.as_slice().expect("contiguous"), &sched)?;
        epochs.push(RefineEpoch {
            n,
            threshold: sched.threshold(),
            selected: mask.count(),
            mean_nll: if n_total == 0 { 0.0 } else { nlls.sum() / n_total as f64 },
        });

        let covered = mask.all();
        let mut chosen = mask.indices();
        if !chosen.is_empty() {
            train_pass(&mut params, target, &pseudo.labels, &mut chosen, optimizer, batch_size, rng)?;
        }
        if n >= schedule.n_max && covered {
            break;
        }
        n += 1;
    }

    let final_nll = target_nll(&params, target, &pseudo.labels)?;
    let mask = select(final_nll.as_slice().expect("contiguous"), &schedule.at(n))?;
    Ok(RefineOutcome { params, mask, epochs })
}

/// One shuffled mini-batch pass over `chosen`.
fn train_pass(
    params: &mut NetworkParams,
    target: ArrayView2<'_, f64>,
    labels: &[usize],
    chosen: &mut [usize],
    optimizer: &mut OptimizerState,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<()> {
    let n_total = target.nrows();
    {
        chosen.shuffle(rng);
        // the batch gradient is rescaled so that its expectation is the
        // gradient of the full-data objective
        let coverage = chosen.len() as f64 / n_total as f64;
        for batch in chosen.chunks(batch_size) {
            let x = target.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let trace = params.forward(x.view())?;
            let scale = coverage / batch.len() as f64;
            let d_logits = weighted_nll_grad(&trace.probs, &y, |_| scale);
            let grads = params.backward(&trace, &Upstream::logits(d_logits))?;
            sgd_step(params, &grads, optimizer)?;
        }
    }
    Ok(())
}

fn target_nll(params: &NetworkParams, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Array1<f64>> {
    let trace = params.forward(x)?;
    per_sample_nll(trace.logits.view(), labels)
}

/// Target samples that passed the confidence check, with their (unchanged)
/// pseudo-labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FilteredTargetSet {
    pub indices: Vec<usize>,
    pub pseudo_labels: Vec<usize>,
}

impl FilteredTargetSet {
    /// Keeps every sample.
    pub fn all(pseudo: &PseudoLabelSet) -> Self {
        Self {
            indices: (0..pseudo.len()).collect(),
            pseudo_labels: pseudo.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Members per class.
    pub fn by_class(&self, num_classes: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); num_classes];
        for (&i, &y) in self.indices.iter().zip(&self.pseudo_labels) {
            out[y].push(i);
        }
        out
    }
}

/// Keeps sample `i` iff `NLL(x_i, ỹ_i) ≤ lambda` under `aux`, i.e. the
/// auxiliary network gives the pseudo-label probability at least `e^{-λ}`.
pub fn confidence_check(
    aux: &NetworkParams,
    target: ArrayView2<'_, f64>,
    pseudo: &PseudoLabelSet,
    lambda: f64,
) -> Result<FilteredTargetSet> {
    let nll = target_nll(aux, target, &pseudo.labels)?;
    Ok(filter_by_nll(nll.as_slice().expect("contiguous"), pseudo, lambda))
}

/// Applies the confidence rule to precomputed NLLs.
pub fn filter_by_nll(nll: &[f64], pseudo: &PseudoLabelSet, lambda: f64) -> FilteredTargetSet {
    let indices: Vec<usize> = (0..nll.len()).filter(|&i| nll[i] <= lambda).collect();
    let pseudo_labels = indices.iter().map(|&i| pseudo.labels[i]).collect();
    FilteredTargetSet { indices, pseudo_labels }
}
