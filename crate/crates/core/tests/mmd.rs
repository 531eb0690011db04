mod common;

use cauda::alignment::{c2c_loss, median_bandwidth, mmd2, p2p_loss, rbf, ClassBatch, KernelSpec};
use cauda::model::softmax_rows;
use common::oracles::{class_mmd_double_loop, mmd2_double_loop};
use common::{rng, uniform_matrix};
use ndarray::{array, s, Array2};
use proptest::prelude::*;
use rand::Rng as _;

type Groups = Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>;

/// A class-major batch over 3 classes with 1..=5 rows per side and class.
fn random_batch(r: &mut cauda::Rng) -> ClassBatch {
    let mut b = ClassBatch {
        classes: vec![0, 1, 2],
        source: Vec::new(),
        source_ranges: Vec::new(),
        target: Vec::new(),
        target_ranges: Vec::new(),
    };
    for c in 0..3 {
        let (ns, nt) = (r.random_range(1..=5), r.random_range(1..=5));
        let start = b.source.len();
        b.source.extend(std::iter::repeat_n(c, ns));
        b.source_ranges.push(start..b.source.len());
        let start = b.target.len();
        b.target.extend(std::iter::repeat_n(c, nt));
        b.target_ranges.push(start..b.target.len());
    }
    b
}

fn groups(batch: &ClassBatch, src: &Array2<f64>, tgt: &Array2<f64>) -> Groups {
    let rows = |m: &Array2<f64>, r: std::ops::Range<usize>| -> Vec<Vec<f64>> {
        m.slice(s![r, ..]).rows().into_iter().map(|x| x.to_vec()).collect()
    };
    batch
        .source_ranges
        .iter()
        .zip(&batch.target_ranges)
        .map(|(a, b)| (rows(src, a.clone()), rows(tgt, b.clone())))
        .collect()
}

fn median_oracle(src: &Array2<f64>, tgt: &Array2<f64>) -> f64 {
    let all: Vec<Vec<f64>> = src.rows().into_iter().chain(tgt.rows()).map(|r| r.to_vec()).collect();
    let mut d = Vec::new();
    for i in 0..all.len() {
        for j in 0..i {
            d.push(all[i].iter().zip(&all[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { (d[m / 2 - 1] + d[m / 2]) / 2.0 };
    med.max(1e-3)
}

#[test]
fn c2c_matches_double_loop_oracle() {
    let mut r = rng(31);
    for _ in 0..50 {
        let batch = random_batch(&mut r);
        let d = r.random_range(1..6);
        let src = uniform_matrix(&mut r, batch.source.len(), d, 2.0);
        let tgt = uniform_matrix(&mut r, batch.target.len(), d, 2.0);
        let g = groups(&batch, &src, &tgt);
        for kernel in [KernelSpec::Fixed(r.random_range(0.2..3.0)), KernelSpec::Median] {
            let got = c2c_loss(&batch, src.view(), tgt.view(), &kernel).unwrap();
            let sigma = match kernel {
                KernelSpec::Fixed(s) => s,
                KernelSpec::Median => median_oracle(&src, &tgt),
            };
            assert!((got.sigma - sigma).abs() <= 1e-15 * sigma);
            let want = class_mmd_double_loop(&g, sigma);
            assert!((got.value - want).abs() < 1e-12, "{} vs {want}", got.value);
            assert_eq!(got.classes_used, 3);
        }
    }
}

#[test]
fn p2p_matches_double_loop_oracle() {
    let mut r = rng(32);
    for _ in 0..50 {
        let batch = random_batch(&mut r);
        let k = r.random_range(2..6);
        let src = softmax_rows(&uniform_matrix(&mut r, batch.source.len(), k, 3.0));
        let tgt = softmax_rows(&uniform_matrix(&mut r, batch.target.len(), k, 3.0));
        let sigma = r.random_range(0.2..2.0);
        let got = p2p_loss(&batch, src.view(), tgt.view(), &KernelSpec::Fixed(sigma)).unwrap();
        let want = class_mmd_double_loop(&groups(&batch, &src, &tgt), sigma);
        assert!((got.value - want).abs() < 1e-12);
    }
}

#[test]
fn identical_multisets_give_zero() {
    let mut r = rng(33);
    for _ in 0..50 {
        let batch = random_batch(&mut r);
        // same rows per class on both sides, in shuffled order
        let mut src = uniform_matrix(&mut r, batch.source.len(), 3, 2.0);
        let mut b = batch.clone();
        b.target = b.source.clone();
        b.target_ranges = b.source_ranges.clone();
        let mut tgt = src.clone();
        for range in &b.target_ranges {
            let mut block = tgt.slice_mut(s![range.clone(), ..]);
            let rev: Vec<Vec<f64>> = block.rows().into_iter().rev().map(|x| x.to_vec()).collect();
            for (mut row, v) in block.rows_mut().into_iter().zip(rev) {
                row.assign(&ndarray::Array1::from(v));
            }
        }
        assert!(c2c_loss(&b, src.view(), tgt.view(), &KernelSpec::Median).unwrap().value.abs() < 1e-12);
        src.mapv_inplace(f64::exp);
        let p = softmax_rows(&src);
        assert!(p2p_loss(&b, p.view(), p.view(), &KernelSpec::Fixed(0.5)).unwrap().value.abs() < 1e-12);
    }
}

#[test]
fn singleton_expansions() {
    let x = array![[0.0, 1.0]];
    let y = array![[1.0, -1.0]];
    let m = mmd2(x.view(), y.view(), 0.8).unwrap();
    let k = rbf(x.row(0), y.row(0), 0.8).unwrap();
    assert!((m.value - (2.0 - 2.0 * k)).abs() < 1e-15);

    // one-hot probabilities at squared distance 2
    let e0 = array![[1.0, 0.0, 0.0]];
    let e1 = array![[0.0, 1.0, 0.0]];
    let sigma: f64 = 0.7;
    let m = mmd2(e0.view(), e1.view(), sigma).unwrap();
    assert!((m.value - (2.0 - 2.0 * (-1.0 / sigma.powi(2)).exp())).abs() < 1e-15);
}

#[test]
fn rbf_reference_values() {
    let sigma: f64 = 1.3;
    let u = array![0.0, 0.0];
    let v = array![sigma * 2f64.sqrt(), 0.0];
    assert_eq!(rbf(u.view(), u.view(), sigma).unwrap(), 1.0);
    assert!((rbf(u.view(), v.view(), sigma).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    assert!(rbf(u.view(), array![1.0].view(), sigma).is_err());
}

#[test]
fn median_bandwidth_is_floored() {
    let a = array![[1.0, 1.0], [1.0, 1.0]];
    assert_eq!(median_bandwidth(a.view(), a.view()), 1e-3);
}

#[test]
fn class_terms_are_additive() {
    let mut r = rng(34);
    let batch = random_batch(&mut r);
    let src = uniform_matrix(&mut r, batch.source.len(), 2, 1.0);
    let tgt = uniform_matrix(&mut r, batch.target.len(), 2, 1.0);
    let kernel = KernelSpec::Fixed(0.9);
    let all = c2c_loss(&batch, src.view(), tgt.view(), &kernel).unwrap().value;
    let per: f64 = (0..3)
        .map(|c| {
            let (rs, rt) = (batch.source_ranges[c].clone(), batch.target_ranges[c].clone());
            mmd2(src.slice(s![rs, ..]), tgt.slice(s![rt, ..]), 0.9).unwrap().value
        })
        .sum::<f64>()
        / 3.0;
    assert!((all - per).abs() < 1e-15);
}

proptest! {
    #[test]
    fn symmetric_and_non_negative(
        xs in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..6),
        ys in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..6),
        sigma in 0.1..3.0f64,
    ) {
        let to = |v: &Vec<Vec<f64>>| Array2::from_shape_fn((v.len(), 2), |(i, j)| v[i][j]);
        let (x, y) = (to(&xs), to(&ys));
        let a = mmd2(x.view(), y.view(), sigma).unwrap().value;
        let b = mmd2(y.view(), x.view(), sigma).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= -1e-12);
        prop_assert!((a - mmd2_double_loop(&xs, &ys, sigma)).abs() < 1e-12);
    }
}
