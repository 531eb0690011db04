//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod grad;
pub mod oracles;

use cauda::assignment::PseudoLabelSet;
use cauda::datagen::LabeledSet;
use cauda::model::{GradientSet, NetworkParams};
use cauda::refinement::FilteredTargetSet;
use cauda::{rng_from_seed, Rng};
use ndarray::Array2;
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    rng_from_seed(seed)
}

pub fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// A small random network with non-zero biases so every parameter matters.
pub fn random_net(rng: &mut Rng, d: usize, hidden: &[usize], k: usize) -> NetworkParams {
    let mut p = NetworkParams::init(d, hidden, k, rng).unwrap();
    for layer in p.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    p
}

/// Labels `0..k` each at least once, the rest random.
pub fn covering_labels(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect()
}

pub fn random_source(rng: &mut Rng, n: usize, d: usize, k: usize) -> LabeledSet {
    let x = uniform_matrix(rng, n, d, 2.0);
    LabeledSet::new(x, covering_labels(rng, n, k), k).unwrap()
}

pub fn random_filtered(rng: &mut Rng, n: usize, k: usize) -> FilteredTargetSet {
    let labels = covering_labels(rng, n, k);
    FilteredTargetSet::all(&PseudoLabelSet {
        cluster_of: labels.clone(),
        labels,
    })
}

/// Largest `|a - n| / max(|a|, |n|, floor)` between the analytic gradient and
/// central differences of `f`.
pub fn max_rel_error(
    params: &NetworkParams,
    analytic: &GradientSet,
    h: f64,
    floor: f64,
    f: impl Fn(&NetworkParams) -> f64,
) -> f64 {
    let a: Vec<f64> = analytic.iter().copied().collect();
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for i in 0..a.len() {
        let orig = *probe.iter().nth(i).unwrap();
        *probe.iter_mut().nth(i).unwrap() = orig + h;
        let up = f(&probe);
        *probe.iter_mut().nth(i).unwrap() = orig - h;
        let down = f(&probe);
        *probe.iter_mut().nth(i).unwrap() = orig;
        let num = (up - down) / (2.0 * h);
        let err = (a[i] - num).abs() / a[i].abs().max(num.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
