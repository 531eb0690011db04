//! Finite-difference gradient checks shared by the gradient suite and the
//! acceptance run. Each check returns the worst relative error over every
//! parameter of one random net.

use cauda::alignment::{alignment_gradients, c2c_loss, p2p_loss, sample_class_batch, total_loss, ClassBatch, KernelSpec, Objective};
use cauda::model::{cross_entropy, cross_entropy_grad, NetworkParams, Upstream};
use cauda::refinement::self_paced_loss;
use ndarray::{Array2, Axis};
use rand::Rng as _;

use super::{max_rel_error, random_filtered, random_net, random_source, rng, uniform_matrix};

pub const H: f64 = 1e-5;
pub const FLOOR: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

pub struct Case {
    pub params: NetworkParams,
    pub batch: ClassBatch,
    pub xs: Array2<f64>,
    pub xt: Array2<f64>,
}

pub fn case(seed: u64) -> Case {
    let mut r = rng(seed);
    let d = r.random_range(2..5);
    let k = r.random_range(2..5);
    let hidden = [r.random_range(3..7), r.random_range(2..6)];
    let params = random_net(&mut r, d, &hidden, k);
    let source = random_source(&mut r, 30, d, k);
    let target = uniform_matrix(&mut r, 25, d, 2.0);
    let filtered = random_filtered(&mut r, 25, k);
    let batch = sample_class_batch(&source, &filtered, k, 3, 4, &mut r).unwrap().unwrap();
    let xs = source.features().select(Axis(0), &batch.source);
    let xt = target.select(Axis(0), &batch.target);
    Case { params, batch, xs, xt }
}

fn upstream(features: Option<Array2<f64>>, logits: Option<Array2<f64>>, probs: Option<Array2<f64>>) -> Upstream {
    Upstream { features, logits, probs }
}

pub fn cross_entropy_error(seed: u64) -> f64 {
    let c = case(seed);
    let y = c.batch.source_labels();
    let trace = c.params.forward(c.xs.view()).unwrap();
    let (_, d) = cross_entropy_grad(&trace, &y).unwrap();
    let g = c.params.backward(&trace, &Upstream::logits(d)).unwrap();
    max_rel_error(&c.params, &g, H, FLOOR, |p| cross_entropy(&p.forward(c.xs.view()).unwrap(), &y).unwrap())
}

pub fn c2c_error(seed: u64) -> f64 {
    let c = case(seed);
    let kernel = KernelSpec::Fixed(0.7);
    let ts = c.params.forward(c.xs.view()).unwrap();
    let tt = c.params.forward(c.xt.view()).unwrap();
    let m = c2c_loss(&c.batch, ts.features(), tt.features(), &kernel).unwrap();
    let mut g = c.params.backward(&ts, &upstream(Some(m.grad_source), None, None)).unwrap();
    g.add_assign(&c.params.backward(&tt, &upstream(Some(m.grad_target), None, None)).unwrap())
        .unwrap();
    max_rel_error(&c.params, &g, H, FLOOR, |p| {
        let a = p.forward(c.xs.view()).unwrap();
        let b = p.forward(c.xt.view()).unwrap();
        c2c_loss(&c.batch, a.features(), b.features(), &kernel).unwrap().value
    })
}

pub fn p2p_error(seed: u64) -> f64 {
    let c = case(seed);
    let kernel = KernelSpec::Fixed(0.4);
    let ts = c.params.forward(c.xs.view()).unwrap();
    let tt = c.params.forward(c.xt.view()).unwrap();
    let m = p2p_loss(&c.batch, ts.probs.view(), tt.probs.view(), &kernel).unwrap();
    let mut g = c.params.backward(&ts, &upstream(None, None, Some(m.grad_source))).unwrap();
    g.add_assign(&c.params.backward(&tt, &upstream(None, None, Some(m.grad_target))).unwrap())
        .unwrap();
    max_rel_error(&c.params, &g, H, FLOOR, |p| {
        let a = p.forward(c.xs.view()).unwrap();
        let b = p.forward(c.xt.view()).unwrap();
        p2p_loss(&c.batch, a.probs.view(), b.probs.view(), &kernel).unwrap().value
    })
}

pub fn self_paced_error(seed: u64) -> f64 {
    let c = case(seed);
    let mut r = rng(seed + 7);
    let k = c.params.num_classes();
    let y: Vec<usize> = (0..c.xt.nrows()).map(|_| r.random_range(0..k)).collect();
    let mask: Vec<bool> = (0..y.len()).map(|_| r.random_bool(0.6)).collect();
    let n_total = y.len() + 5;
    let thr = 0.7;
    let trace = c.params.forward(c.xt.view()).unwrap();
    let (_, d) = self_paced_loss(&trace, &y, &mask, thr, n_total).unwrap();
    let g = c.params.backward(&trace, &Upstream::logits(d)).unwrap();
    max_rel_error(&c.params, &g, H, FLOOR, |p| {
        let t = p.forward(c.xt.view()).unwrap();
        self_paced_loss(&t, &y, &mask, thr, n_total).unwrap().0
    })
}

pub fn composite_error(seed: u64) -> f64 {
    let c = case(seed);
    let objective = Objective {
        tau1: 0.3,
        tau2: 0.3,
        // every other net also exercises the hard pseudo-label term
        target_ce: if seed % 2 == 0 { 0.0 } else { 0.5 },
        feature_kernel: KernelSpec::Fixed(0.8),
        prob_kernel: KernelSpec::Fixed(0.5),
    };
    let xs_all = scatter(&c.xs, &c.batch.source);
    let xt_all = scatter(&c.xt, &c.batch.target);
    let (_, g) = alignment_gradients(&c.params, &c.batch, xs_all.view(), xt_all.view(), &objective).unwrap();
    max_rel_error(&c.params, &g, H, FLOOR, |p| {
        let a = p.forward(c.xs.view()).unwrap();
        let b = p.forward(c.xt.view()).unwrap();
        total_loss(&c.batch, &a, &b, &objective).unwrap().breakdown.total
    })
}

/// Places batch rows back at their dataset indices so that selecting
/// `indices` reproduces `rows`.
fn scatter(rows: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let n = indices.iter().max().map_or(0, |m| m + 1);
    let mut out = Array2::zeros((n, rows.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(i).assign(&rows.row(r));
    }
    out
}

/// Every check, keyed by name, with its seed offset.
pub const CHECKS: [(&str, u64, fn(u64) -> f64); 5] = [
    ("cross-entropy", 0, cross_entropy_error),
    ("class-to-class MMD", 100, c2c_error),
    ("probability MMD", 200, p2p_error),
    ("self-paced data term", 300, self_paced_error),
    ("composite objective", 400, composite_error),
];
