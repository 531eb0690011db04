//! Class-aware alignment of the two domains.
//!
//! A batch draws a subset of classes present in both the source set and the
//! filtered target set, then a few samples of each class from each domain.
//! For every drawn class the biased (V-statistic) MMD² between the source and
//! target samples is computed with an RBF kernel, once on the feature
//! embeddings (center-to-center) and once on the softmax outputs
//! (probability-to-probability). The per-class values are averaged.

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::index;
use rand::Rng as _;

use crate::datagen::LabeledSet;
use crate::model::{cross_entropy_grad, ForwardTrace, GradientSet, NetworkParams, Upstream};
use crate::refinement::FilteredTargetSet;
use crate::{Error, Result, Rng};

/// Lower bound of the median-heuristic bandwidth.
pub const MIN_BANDWIDTH: f64 = 1e-3;

/// Per-class source and target samples drawn for one alignment step.
///
/// Rows are stored class-major: the samples of `classes[c]` occupy
/// `source[source_ranges[c]]` and `target[target_ranges[c]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassBatch {
    pub classes: Vec<usize>,
    /// Indices into the source set.
    pub source: Vec<usize>,
    pub source_ranges: Vec<Range<usize>>,
    /// Indices into the target set.
    pub target: Vec<usize>,
    pub target_ranges: Vec<Range<usize>>,
}

impl ClassBatch {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class of every source row, in batch order.
    pub fn source_labels(&self) -> Vec<usize> {
        expand(&self.classes, &self.source_ranges)
    }

    /// Pseudo-label of every target row, in batch order.
    pub fn target_labels(&self) -> Vec<usize> {
        expand(&self.classes, &self.target_ranges)
    }
}

fn expand(classes: &[usize], ranges: &[Range<usize>]) -> Vec<usize> {
    classes
        .iter()
        .zip(ranges)
        .flat_map(|(&c, r)| std::iter::repeat_n(c, r.len()))
        .collect()
}

/// Draws a class-aware batch.
///
/// `k_b` classes are chosen uniformly without replacement among those with
/// at least one source and one filtered target sample (all of them if fewer
/// are eligible). Within a class, `n_source` / `n_target` samples are drawn
/// without replacement, or with replacement when the class is smaller.
/// Returns `Ok(None)` when no class is eligible.
pub fn sample_class_batch(
    source: &LabeledSet,
    filtered: &FilteredTargetSet,
    k_b: usize,
    n_source: usize,
    n_target: usize,
    rng: &mut Rng,
) -> Result<Option<ClassBatch>> {
    if k_b == 0 || n_source == 0 || n_target == 0 {
        return Err(Error::config("class batch sizes must be >= 1"));
    }
    let k = source.num_classes();
    if let Some(&y) = filtered.pseudo_labels.iter().find(|&&y| y >= k) {
        return Err(Error::data(format!("pseudo-label {y} out of range for K={k}")));
    }
    let mut source_by_class = vec![Vec::new(); k];
    for (i, &y) in source.labels().iter().enumerate() {
        source_by_class[y].push(i);
    }
    let target_by_class = filtered.by_class(k);
    let eligible: Vec<usize> = (0..k)
        .filter(|&c| !source_by_class[c].is_empty() && !target_by_class[c].is_empty())
        .collect();
    if eligible.is_empty() {
        return Ok(None);
    }

    let take = k_b.min(eligible.len());
    let mut classes: Vec<usize> = index::sample(rng, eligible.len(), take)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    classes.sort_unstable();

    let mut batch = ClassBatch {
        classes: classes.clone(),
        source: Vec::new(),
        source_ranges: Vec::new(),
        target: Vec::new(),
        target_ranges: Vec::new(),
    };
    for &c in &classes {
        let start = batch.source.len();
        draw(&source_by_class[c], n_source, rng, &mut batch.source);
        batch.source_ranges.push(start..batch.source.len());
        let start = batch.target.len();
        draw(&target_by_class[c], n_target, rng, &mut batch.target);
        batch.target_ranges.push(start..batch.target.len());
    }
    Ok(Some(batch))
}

fn draw(members: &[usize], n: usize, rng: &mut Rng, out: &mut Vec<usize>) {
    if members.len() >= n {
        out.extend(index::sample(rng, members.len(), n).into_iter().map(|i| members[i]));
    } else {
        out.extend((0..n).map(|_| members[rng.random_range(0..members.len())]));
    }
}

/// RBF kernel bandwidth choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    Fixed(f64),
    /// Median pairwise distance among the points being compared, floored at
    /// [`MIN_BANDWIDTH`]. Resolved once per step and treated as a constant
    /// when differentiating.
    Median,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Fixed(s) if !(s > 0.0) || !s.is_finite() => Err(Error::config("kernel sigma must be > 0")),
            _ => Ok(()),
        }
    }

    /// Bandwidth for a batch whose rows are `a` and `b` stacked.
    pub fn resolve(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            KernelSpec::Fixed(s) => s,
            KernelSpec::Median => median_bandwidth(a, b),
        })
    }
}

/// Median Euclidean distance over all pairs of rows in `a` ∪ `b`.
pub fn median_bandwidth(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let rows: Vec<ArrayView1<'_, f64>> = a.rows().into_iter().chain(b.rows()).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    med.max(MIN_BANDWIDTH)
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(−‖u − v‖² / (2σ²))`.
pub fn rbf(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>, sigma: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("kernel inputs have dims {} and {}", u.len(), v.len())));
    }
    Ok((-sq_dist(u, v) / (2.0 * sigma * sigma)).exp())
}

/// Biased MMD² between two samples with its gradients.
#[derive(Clone, Debug)]
pub struct MmdTerm {
    pub value: f64,
    pub grad_x: Array2<f64>,
    pub grad_y: Array2<f64>,
}

/// `1/n² ΣΣ k(x,x') + 1/m² ΣΣ k(y,y') − 2/(nm) ΣΣ k(x,y)`, diagonal terms
/// included, with gradients with respect to every row of `x` and `y`.
pub fn mmd2(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, sigma: f64) -> Result<MmdTerm> {
    if x.ncols() != y.ncols() {
        return Err(Error::shape(format!("MMD inputs have dims {} and {}", x.ncols(), y.ncols())));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::data("MMD needs at least one sample per side"));
    }
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut grad_x = Array2::zeros(x.dim());
    let mut grad_y = Array2::zeros(y.dim());

    let axx = self_block(x, inv_s2, &mut grad_x);
    let ayy = self_block(y, inv_s2, &mut grad_y);

    // cross term, weight −2/(nm)
    let w = -2.0 / (x.nrows() * y.nrows()) as f64;
    let mut sxy = 0.0;
    for (i, xi) in x.rows().into_iter().enumerate() {
        for (j, yj) in y.rows().into_iter().enumerate() {
            let k = (-0.5 * sq_dist(xi, yj) * inv_s2).exp();
            sxy += k;
            // ∂k/∂x = −k (x − y)/σ²
            let c = w * k * inv_s2;
            Zip::from(grad_x.row_mut(i))
                .and(&xi)
                .and(&yj)
                .for_each(|g, &a, &b| *g -= c * (a - b));
            Zip::from(grad_y.row_mut(j))
                .and(&yj)
                .and(&xi)
                .for_each(|g, &a, &b| *g -= c * (a - b));
        }
    }
    let value = axx + ayy + sxy * w;
    Ok(MmdTerm { value, grad_x, grad_y })
}

/// `1/n² Σ_i Σ_j k(x_i, x_j)`; its gradient is written into `grad`.
fn self_block(x: ArrayView2<'_, f64>, inv_s2: f64, grad: &mut Array2<f64>) -> f64 {
    let n = x.nrows();
    let w = 1.0 / (n * n) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..n {
            let xj = x.row(j);
            let k = (-0.5 * sq_dist(xi, xj) * inv_s2).exp();
            sum += k;
            // x_i appears as both arguments across (i, j) and (j, i)
            let c = 2.0 * w * k * inv_s2;
            Zip::from(grad.row_mut(i))
                .and(&xi)
                .and(&xj)
                .for_each(|g, &a, &b| *g -= c * (a - b));
        }
    }
    sum * w
}

/// Class-averaged MMD² and its gradients for rows laid out as in `batch`.
#[derive(Clone, Debug)]
pub struct ClassMmd {
    pub value: f64,
    pub grad_source: Array2<f64>,
    pub grad_target: Array2<f64>,
    pub classes_used: usize,
    pub sigma: f64,
}

fn class_mmd(batch: &ClassBatch, src: ArrayView2<'_, f64>, tgt: ArrayView2<'_, f64>, kernel: &KernelSpec) -> Result<ClassMmd> {
    if src.nrows() != batch.source.len() || tgt.nrows() != batch.target.len() {
        return Err(Error::shape(format!(
            "batch has {}/{} rows, got {}/{}",
            batch.source.len(),
            batch.target.len(),
            src.nrows(),
            tgt.nrows()
        )));
    }
    if src.ncols() != tgt.ncols() {
        return Err(Error::shape("source and target rows differ in width"));
    }
    let sigma = kernel.resolve(src, tgt)?;
    let mut grad_source = Array2::zeros(src.dim());
    let mut grad_target = Array2::zeros(tgt.dim());
    let mut total = 0.0;
    let mut used = 0usize;
    let mut parts = Vec::new();
    for (rs, rt) in batch.source_ranges.iter().zip(&batch.target_ranges) {
        if rs.is_empty() || rt.is_empty() {
            log::warn!("class with an empty side skipped in MMD");
            continue;
        }
        let term = mmd2(src.slice(ndarray::s![rs.clone(), ..]), tgt.slice(ndarray::s![rt.clone(), ..]), sigma)?;
        total += term.value;
        used += 1;
        parts.push((rs.clone(), rt.clone(), term));
    }
    if used == 0 {
        return Ok(ClassMmd {
            value: 0.0,
            grad_source,
            grad_target,
            classes_used: 0,
            sigma,
        });
    }
    let inv = 1.0 / used as f64;
    for (rs, rt, term) in parts {
        grad_source.slice_mut(ndarray::s![rs, ..]).scaled_add(inv, &term.grad_x);
        grad_target.slice_mut(ndarray::s![rt, ..]).scaled_add(inv, &term.grad_y);
    }
    Ok(ClassMmd {
        value: total * inv,
        grad_source,
        grad_target,
        classes_used: used,
        sigma,
    })
}

/// Center-to-center loss on the feature embeddings of the batch rows.
pub fn c2c_loss(
    batch: &ClassBatch,
    source_features: ArrayView2<'_, f64>,
    target_features: ArrayView2<'_, f64>,
    kernel: &KernelSpec,
) -> Result<ClassMmd> {
    class_mmd(batch, source_features, target_features, kernel)
}

/// Probability-to-probability loss on the softmax outputs of the batch rows.
pub fn p2p_loss(
    batch: &ClassBatch,
    source_probs: ArrayView2<'_, f64>,
    target_probs: ArrayView2<'_, f64>,
    kernel: &KernelSpec,
) -> Result<ClassMmd> {
    for row in source_probs.rows().into_iter().chain(target_probs.rows()) {
        if (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::data("probability rows must sum to 1"));
        }
    }
    class_mmd(batch, source_probs, target_probs, kernel)
}

/// Weights of the alignment objective
/// `τ₁ · C2C + τ₂ · P2P + CE(source) + w_t · CE(target, pseudo)`.
///
/// `w_t` is zero for the regular objective; it is only used by the
/// hard-pseudo-label cross-entropy ablation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub tau1: f64,
    pub tau2: f64,
    pub target_ce: f64,
    pub feature_kernel: KernelSpec,
    pub prob_kernel: KernelSpec,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            tau1: 0.3,
            tau2: 0.3,
            target_ce: 0.0,
            feature_kernel: KernelSpec::Median,
            prob_kernel: KernelSpec::Median,
        }
    }
}

/// Components of one evaluation of the alignment objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub c2c: f64,
    pub p2p: f64,
    pub target_ce: f64,
}

/// The objective and the upstream gradients for the source and target
/// forward passes.
#[derive(Clone, Debug)]
pub struct TotalLoss {
    pub breakdown: LossBreakdown,
    pub source: Upstream,
    pub target: Upstream,
}

/// Evaluates the alignment objective on a batch already pushed through the
/// network.
pub fn total_loss(
    batch: &ClassBatch,
    source: &ForwardTrace,
    target: &ForwardTrace,
    objective: &Objective,
) -> Result<TotalLoss> {
    let src_labels = batch.source_labels();
    let (ce, d_src_logits) = cross_entropy_grad(source, &src_labels)?;
    let c2c = c2c_loss(batch, source.features(), target.features(), &objective.feature_kernel)?;
    let p2p = p2p_loss(batch, source.probs.view(), target.probs.view(), &objective.prob_kernel)?;

    let mut breakdown = LossBreakdown {
        total: 0.0,
        ce,
        c2c: c2c.value,
        p2p: p2p.value,
        target_ce: 0.0,
    };
    breakdown.total = ce + objective.tau1 * c2c.value + objective.tau2 * p2p.value;

    let mut tgt_logits = None;
    if objective.target_ce != 0.0 {
        let (tce, mut d) = cross_entropy_grad(target, &batch.target_labels())?;
        d *= objective.target_ce;
        breakdown.target_ce = tce;
        breakdown.total += objective.target_ce * tce;
        tgt_logits = Some(d);
    }

    Ok(TotalLoss {
        breakdown,
        source: Upstream {
            features: Some(c2c.grad_source * objective.tau1),
            logits: Some(d_src_logits),
            probs: Some(p2p.grad_source * objective.tau2),
        },
        target: Upstream {
            features: Some(c2c.grad_target * objective.tau1),
            logits: tgt_logits,
            probs: Some(p2p.grad_target * objective.tau2),
        },
    })
}

/// Forward passes, objective and parameter gradients for one class batch.
pub fn alignment_gradients(
    params: &NetworkParams,
    batch: &ClassBatch,
    source_x: ArrayView2<'_, f64>,
    target_x: ArrayView2<'_, f64>,
    objective: &Objective,
) -> Result<(LossBreakdown, GradientSet)> {
    let xs = source_x.select(Axis(0), &batch.source);
    let xt = target_x.select(Axis(0), &batch.target);
    let ts = params.forward(xs.view())?;
    let tt = params.forward(xt.view())?;
    let loss = total_loss(batch, &ts, &tt, objective)?;
    let mut grads = params.backward(&ts, &loss.source)?;
    grads.add_assign(&params.backward(&tt, &loss.target)?)?;
    Ok((loss.breakdown, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::PseudoLabelSet;
    use crate::rng_from_seed;
    use ndarray::array;

    fn one_class_batch(ns: usize, nt: usize) -> ClassBatch {
        ClassBatch {
            classes: vec![0],
            source: (0..ns).collect(),
            source_ranges: vec![0..ns],
            target: (0..nt).collect(),
            target_ranges: vec![0..nt],
        }
    }

    #[test]
    fn rbf_values() {
        let u = array![1.0, 2.0, 3.0];
        assert_eq!(rbf(u.view(), u.view(), 0.7).unwrap(), 1.0);
        // ‖u−v‖² = 2σ² gives e^{-1}
        let v = array![1.0, 2.0, 3.0 + 2.0f64.sqrt()];
        assert!((rbf(u.view(), v.view(), 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let w = array![0.3, -1.0, 2.0];
        assert_eq!(rbf(u.view(), w.view(), 1.3).unwrap(), rbf(w.view(), u.view(), 1.3).unwrap());
        assert!(rbf(u.view(), array![1.0].view(), 1.0).is_err());
    }

    #[test]
    fn singleton_mmd() {
        let x = array![[0.0, 1.0]];
        let y = array![[2.0, -1.0]];
        let b = one_class_batch(1, 1);
        let l = c2c_loss(&b, x.view(), y.view(), &KernelSpec::Fixed(1.5)).unwrap();
        let k = rbf(x.row(0), y.row(0), 1.5).unwrap();
        assert!((l.value - (2.0 - 2.0 * k)).abs() < 1e-15);
    }

    #[test]
    fn one_hot_p2p() {
        let ps = array![[1.0, 0.0, 0.0]];
        let pt = array![[0.0, 1.0, 0.0]];
        let s = 0.8;
        let l = p2p_loss(&one_class_batch(1, 1), ps.view(), pt.view(), &KernelSpec::Fixed(s)).unwrap();
        assert!((l.value - (2.0 - 2.0 * (-1.0 / (s * s)).exp())).abs() < 1e-15);
    }

    #[test]
    fn p2p_rejects_unnormalized_rows() {
        let ps = array![[0.5, 0.0]];
        let pt = array![[0.0, 1.0]];
        assert!(p2p_loss(&one_class_batch(1, 1), ps.view(), pt.view(), &KernelSpec::Median).is_err());
    }

    #[test]
    fn identical_sets_have_zero_mmd() {
        let x = array![[0.0, 1.0], [2.0, 0.5], [1.0, 1.0]];
        let l = c2c_loss(&one_class_batch(3, 3), x.view(), x.view(), &KernelSpec::Median).unwrap();
        assert!(l.value.abs() < 1e-12);
    }

    #[test]
    fn median_bandwidth_floor_and_value() {
        let same = array![[1.0, 1.0], [1.0, 1.0]];
        assert_eq!(median_bandwidth(same.view(), same.view()), MIN_BANDWIDTH);
        // pairwise distances 1, 2, 3 -> median 2
        let a = array![[0.0], [1.0]];
        let b = array![[3.0]];
        assert_eq!(median_bandwidth(a.view(), b.view()), 2.0);
    }

    fn tiny_source() -> LabeledSet {
        let x = Array2::from_shape_fn((9, 2), |(i, j)| (i * 2 + j) as f64);
        LabeledSet::new(x, vec![0, 0, 0, 1, 1, 1, 2, 2, 2], 3).unwrap()
    }

    #[test]
    fn absent_target_class_is_never_drawn() {
        let src = tiny_source();
        let filtered = FilteredTargetSet {
            indices: vec![0, 1, 4],
            pseudo_labels: vec![0, 2, 2],
        };
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let b = sample_class_batch(&src, &filtered, 3, 2, 2, &mut rng).unwrap().unwrap();
            assert!(!b.classes.contains(&1));
            assert_eq!(b.classes, vec![0, 2]);
            for (&c, r) in b.classes.iter().zip(&b.target_ranges) {
                for &i in &b.target[r.clone()] {
                    let pos = filtered.indices.iter().position(|&x| x == i).unwrap();
                    assert_eq!(filtered.pseudo_labels[pos], c);
                }
            }
        }
    }

    #[test]
    fn saturated_batch_covers_everything() {
        let src = tiny_source();
        let pseudo = PseudoLabelSet {
            labels: vec![0, 1, 2, 0, 1, 2],
            cluster_of: vec![0, 1, 2, 0, 1, 2],
        };
        let filtered = FilteredTargetSet::all(&pseudo);
        let mut rng = rng_from_seed(5);
        let b = sample_class_batch(&src, &filtered, 3, 3, 2, &mut rng).unwrap().unwrap();
        let mut s = b.source.clone();
        s.sort_unstable();
        assert_eq!(s, (0..9).collect::<Vec<_>>());
        let mut t = b.target.clone();
        t.sort_unstable();
        assert_eq!(t, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn no_shared_class_yields_none() {
        let src = tiny_source();
        let filtered = FilteredTargetSet {
            indices: vec![],
            pseudo_labels: vec![],
        };
        let mut rng = rng_from_seed(5);
        assert!(sample_class_batch(&src, &filtered, 2, 2, 2, &mut rng).unwrap().is_none());
    }

    #[test]
    fn sampling_is_deterministic() {
        let src = tiny_source();
        let filtered = FilteredTargetSet {
            indices: vec![0, 1, 2, 3],
            pseudo_labels: vec![0, 1, 2, 1],
        };
        let draw = |seed| sample_class_batch(&src, &filtered, 2, 4, 4, &mut rng_from_seed(seed)).unwrap();
        assert_eq!(draw(17), draw(17));
    }
}
