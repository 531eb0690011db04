//! Class and cluster centroids in feature space.
//!
//! Source centroids come from the known labels; target centroids from Lloyd's
//! k-means seeded with the source centroids; across outer iterations the
//! target centroids are smoothed with a spherical moving average.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// `K` centroids in feature space with the sizes of their last assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidSet {
    pub centroids: Array2<f64>,
    pub counts: Vec<usize>,
}

impl CentroidSet {
    pub fn new(centroids: Array2<f64>) -> Result<Self> {
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite centroid"));
        }
        let k = centroids.nrows();
        Ok(Self {
            centroids,
            counts: vec![0; k],
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.centroids.row(k)
    }
}

/// Scales `v` to unit L2 norm. A zero vector is left unchanged.
pub fn normalize(v: &mut Array1<f64>) {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
}

fn normalized(v: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut v = v.to_owned();
    normalize(&mut v);
    v
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-class mean of `features`, each normalized to unit length.
pub fn source_centroids(features: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> Result<CentroidSet> {
    if features.nrows() != labels.len() {
        return Err(Error::shape(format!("{} rows, {} labels", features.nrows(), labels.len())));
    }
    let mut sums = Array2::zeros((k, features.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &y) in features.rows().into_iter().zip(labels) {
        if y >= k {
            return Err(Error::data(format!("label {y} out of range for K={k}")));
        }
        let mut s = sums.row_mut(y);
        s += &row;
        counts[y] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::data(format!("class {empty} has no samples")));
    }
    for (mut s, &c) in sums.rows_mut().into_iter().zip(&counts) {
        s /= c as f64;
        let n = s.dot(&s).sqrt();
        if n > 0.0 {
            s /= n;
        }
    }
    let mut set = CentroidSet::new(sums)?;
    set.counts = counts;
    Ok(set)
}

/// Output of [`kmeans`].
#[derive(Clone, Debug)]
pub struct KMeansResult {
    /// Final cluster means, normalized to unit length.
    pub centroids: CentroidSet,
    /// Final cluster means before normalization.
    pub means: Array2<f64>,
    /// Cluster index of every sample, from the last assignment step.
    pub assignment: Vec<usize>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each iteration, measured against
    /// that iteration's recomputed means.
    pub wcss: Vec<f64>,
}

/// Lloyd's algorithm from the given initial centroids.
///
/// Each iteration assigns every sample to its nearest centroid (squared
/// Euclidean, ties to the lower index), repairs empty clusters, and replaces
/// the centroids with the cluster means. Iteration stops once no centroid
/// moves by `tol` or more, or after `max_iters`.
///
/// An empty cluster is reseeded with the sample farthest from its assigned
/// centroid, taken from a cluster that keeps at least one member.
pub fn kmeans(
    features: ArrayView2<'_, f64>,
    init: &CentroidSet,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let (n, d) = features.dim();
    let k = init.k();
    if k == 0 {
        return Err(Error::config("k-means needs at least one centroid"));
    }
    if k > n {
        return Err(Error::config(format!("K={k} exceeds the {n} samples to cluster")));
    }
    if init.dim() != d {
        return Err(Error::shape(format!("centroids have dim {}, features {d}", init.dim())));
    }
    if max_iters == 0 {
        return Err(Error::config("max_iters must be >= 1"));
    }

    let mut centers = init.centroids.clone();
    let mut assignment = vec![0usize; n];
    let mut wcss = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        let mut dist = vec![0.0; n];
        for (i, x) in features.rows().into_iter().enumerate() {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let dd = sq_dist(x, centers.row(c));
                if dd < best_d {
                    best = c;
                    best_d = dd;
                }
            }
            assignment[i] = best;
            dist[i] = best_d;
        }

        reseed_empty(&mut assignment, &mut dist, k);

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (x, &c) in features.rows().into_iter().zip(&assignment) {
            let mut s = sums.row_mut(c);
            s += &x;
            counts[c] += 1;
        }
        for (mut s, &c) in sums.rows_mut().into_iter().zip(&counts) {
            s /= c as f64;
        }

        let shift = centers
            .rows()
            .into_iter()
            .zip(sums.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = sums;
        wcss.push(
            features
                .rows()
                .into_iter()
                .zip(&assignment)
                .map(|(x, &c)| sq_dist(x, centers.row(c)))
                .sum(),
        );
        if shift < tol {
            break;
        }
    }

    let mut counts = vec![0usize; k];
    for &c in &assignment {
        counts[c] += 1;
    }
    let mut unit = centers.clone();
    for mut row in unit.rows_mut() {
        let nrm = row.dot(&row).sqrt();
        if nrm > 0.0 {
            row /= nrm;
        }
    }
    let mut centroids = CentroidSet::new(unit)?;
    centroids.counts = counts;
    Ok(KMeansResult {
        centroids,
        means: centers,
        assignment,
        iterations,
        wcss,
    })
}

fn reseed_empty(assignment: &mut [usize], dist: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..assignment.len() {
            if counts[assignment[i]] < 2 {
                continue;
            }
            if donor.is_none_or(|j| dist[i] > dist[j]) {
                donor = Some(i);
            }
        }
        // k <= n guarantees a cluster with two or more members exists
        let i = donor.expect("a cluster with at least two members");
        counts[assignment[i]] -= 1;
        assignment[i] = empty;
        counts[empty] = 1;
        dist[i] = 0.0;
    }
}

/// Moving-average refresh of cached centroids from a new assignment pass.
///
/// For every cluster with assigned samples:
/// `c_k ← normalize(normalize(mean_i f_i / ‖f_i‖) + α · c_k)`.
/// Clusters without samples keep their cached centroid. `counts` records the
/// new cluster sizes.
pub fn moving_average_update(
    cache: &CentroidSet,
    features: ArrayView2<'_, f64>,
    assignment: &[usize],
    alpha: f64,
) -> Result<CentroidSet> {
    if !(alpha >= 0.0) {
        return Err(Error::config("moving-average alpha must be >= 0"));
    }
    if features.nrows() != assignment.len() {
        return Err(Error::shape(format!(
            "{} features but {} assignments",
            features.nrows(),
            assignment.len()
        )));
    }
    if features.ncols() != cache.dim() {
        return Err(Error::shape(format!("features dim {} != centroid dim {}", features.ncols(), cache.dim())));
    }
    let k = cache.k();
    let mut sums = Array2::<f64>::zeros(cache.centroids.dim());
    let mut counts = vec![0usize; k];
    for (x, &c) in features.rows().into_iter().zip(assignment) {
        if c >= k {
            return Err(Error::data(format!("cluster index {c} out of range for K={k}")));
        }
        let mut s = sums.row_mut(c);
        s += &normalized(x);
        counts[c] += 1;
    }
    let mut out = cache.centroids.clone();
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let mut mean = sums.row(c).to_owned() / counts[c] as f64;
        normalize(&mut mean);
        let mut updated = mean + &(normalized(cache.row(c)) * alpha);
        normalize(&mut updated);
        out.row_mut(c).assign(&updated);
    }
    let mut set = CentroidSet::new(out)?;
    set.counts = counts;
    Ok(set)
}

/// Nearest centroid per row by squared Euclidean distance, ties to the
/// lower index.
pub fn nearest_centroid(features: ArrayView2<'_, f64>, centroids: &CentroidSet) -> Vec<usize> {
    features
        .axis_iter(Axis(0))
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for c in 0..centroids.k() {
                let d = sq_dist(x, centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}
