//! Optimal one-to-one matching of target clusters to source classes.
//!
//! The cost of pairing source class `i` with target cluster `j` is the
//! Euclidean distance between their centroids. The minimum-cost permutation
//! is found with a shortest-augmenting-path Hungarian solver in `O(K³)`.

use ndarray::Array2;

use crate::clustering::CentroidSet;
use crate::{Error, Result};

/// Square matrix of non-negative finite costs; rows are source classes,
/// columns target clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::shape(format!("cost matrix is {r}×{c}, must be square")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("cost matrix has non-finite entries"));
        }
        if entries.iter().any(|&v| v < 0.0) {
            return Err(Error::data("cost matrix has negative entries"));
        }
        Ok(Self(entries))
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[[row, col]]
    }
}

/// A permutation matching every target cluster to one source class.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `perm[j]` is the source class matched with target cluster `j`.
    pub perm: Vec<usize>,
    /// `Σ_j cost[perm[j], j]`, summed in column order.
    pub total_cost: f64,
}

impl Assignment {
    /// The matching as a row → column map (source class → target cluster).
    pub fn row_to_col(&self) -> Vec<usize> {
        let mut out = vec![0; self.perm.len()];
        for (j, &i) in self.perm.iter().enumerate() {
            out[i] = j;
        }
        out
    }

    pub fn is_bijection(&self) -> bool {
        let mut sorted = self.perm.clone();
        sorted.sort_unstable();
        sorted.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// Pseudo-labels for the target samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelSet {
    pub labels: Vec<usize>,
    pub cluster_of: Vec<usize>,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `cost[i][j] = ‖source_i − target_j‖₂`.
pub fn build_cost(source: &CentroidSet, target: &CentroidSet) -> Result<CostMatrix> {
    if source.k() != target.k() {
        return Err(Error::shape(format!("{} source vs {} target centroids", source.k(), target.k())));
    }
    if source.dim() != target.dim() {
        return Err(Error::shape(format!("centroid dims {} vs {}", source.dim(), target.dim())));
    }
    let k = source.k();
    let mut m = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            m[[i, j]] = source
                .row(i)
                .iter()
                .zip(target.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    CostMatrix::new(m)
}

/// Minimum-cost perfect matching.
///
/// Among equally cheap matchings the one whose row → column map is
/// lexicographically smallest is returned, so a constant matrix yields the
/// identity.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let k = cost.k();
    if k == 0 {
        return Assignment {
            perm: Vec::new(),
            total_cost: 0.0,
        };
    }
    let (row_to_col, u, v) = shortest_augmenting_path(cost);
    let lex = lexicographic_tight_matching(cost, &row_to_col, &u, &v);
    let chosen = match lex {
        Some(m) if total(cost, &m) <= total(cost, &row_to_col) => m,
        _ => row_to_col,
    };
    let mut perm = vec![0; k];
    for (i, &j) in chosen.iter().enumerate() {
        perm[j] = i;
    }
    let total_cost = (0..k).map(|j| cost.get(perm[j], j)).sum();
    Assignment { perm, total_cost }
}

fn total(cost: &CostMatrix, row_to_col: &[usize]) -> f64 {
    let k = row_to_col.len();
    let mut perm = vec![0; k];
    for (i, &j) in row_to_col.iter().enumerate() {
        perm[j] = i;
    }
    (0..k).map(|j| cost.get(perm[j], j)).sum()
}

/// Returns the row → column matching with the dual potentials `u` (rows)
/// and `v` (columns), satisfying `cost[i][j] − u[i] − v[j] ≥ 0` with
/// equality on matched pairs.
fn shortest_augmenting_path(cost: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.k();
    // 1-based with a virtual column 0, as in the classic formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Every optimal matching uses only edges with zero reduced cost under the
/// optimal duals. Walk rows in order and pin each to its lowest tight column
/// that still admits a perfect matching on the remaining rows.
fn lexicographic_tight_matching(cost: &CostMatrix, start: &[usize], u: &[f64], v: &[f64]) -> Option<Vec<usize>> {
    let n = cost.k();
    let scale = cost.entries().iter().fold(1.0f64, |m, &c| m.max(c.abs()));
    let eps = 1e-10 * scale * n as f64;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| (cost.get(i, j) - u[i] - v[j]).abs() <= eps).collect())
        .collect();
    if (0..n).any(|i| !tight[i][start[i]]) {
        return None;
    }

    let mut row_to_col = start.to_vec();
    let mut col_to_row = vec![0; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }

    for i in 0..n {
        for j in 0..n {
            if !tight[i][j] {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            // Force i → j. The row that held j must find another column
            // among the unpinned rows, ending at the column i just released.
            let displaced = col_to_row[j];
            if displaced < i {
                continue;
            }
            let freed = row_to_col[i];
            let mut trial_r2c = row_to_col.clone();
            let mut trial_c2r = col_to_row.clone();
            trial_r2c[i] = j;
            trial_c2r[j] = i;
            let mut seen = vec![false; n];
            seen[j] = true;
            if reroute(displaced, freed, i, &tight, &mut trial_r2c, &mut trial_c2r, &mut seen) {
                row_to_col = trial_r2c;
                col_to_row = trial_c2r;
                break;
            }
        }
    }
    Some(row_to_col)
}

/// Depth-first alternating path from `row` to the free column `target`,
/// touching only rows after `pinned`.
fn reroute(
    row: usize,
    target: usize,
    pinned: usize,
    tight: &[Vec<bool>],
    r2c: &mut [usize],
    c2r: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for col in 0..tight.len() {
        if !tight[row][col] || seen[col] {
            continue;
        }
        seen[col] = true;
        let ok = if col == target {
            true
        } else {
            let owner = c2r[col];
            owner > pinned && reroute(owner, target, pinned, tight, r2c, c2r, seen)
        };
        if ok {
            r2c[row] = col;
            c2r[col] = row;
            return true;
        }
    }
    false
}

/// `labels[i] = perm[cluster_of[i]]`.
pub fn assign_pseudolabels(cluster_of: &[usize], assignment: &Assignment) -> Result<PseudoLabelSet> {
    let k = assignment.perm.len();
    let labels = cluster_of
        .iter()
        .map(|&c| {
            assignment
                .perm
                .get(c)
                .copied()
                .ok_or_else(|| Error::data(format!("cluster index {c} out of range for K={k}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoLabelSet {
        labels,
        cluster_of: cluster_of.to_vec(),
    })
}
