//! Straightforward reference implementations, written independently of the
//! library code on plain `Vec`s.

/// Minimum of `Σ_r cost[r][perm(r)]` over every permutation, with the
/// lexicographically first minimizing permutation.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    loop {
        let total: f64 = (0..n).map(|r| cost[r][perm[r]]).sum();
        if total < best.0 {
            best = (total, perm.clone());
        }
        if !next_permutation(&mut perm) {
            return best;
        }
    }
}

/// Advances to the next permutation in lexicographic order.
pub fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

pub struct Lloyd {
    pub assignment: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub iterations: usize,
    pub wcss: Vec<f64>,
}

/// Textbook Lloyd iterations: nearest center (first on ties), an empty
/// cluster takes the farthest point of a cluster that has two or more,
/// means recomputed, stop when no center moved by `tol`.
pub fn reference_lloyd(x: &[Vec<f64>], init: &[Vec<f64>], max_iters: usize, tol: f64) -> Lloyd {
    let (n, k, d) = (x.len(), init.len(), init[0].len());
    let mut centers = init.to_vec();
    let mut assignment = vec![0; n];
    let mut wcss = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let mut best = 0;
            for c in 1..k {
                if sq(&x[i], &centers[c]) < sq(&x[i], &centers[best]) {
                    best = c;
                }
            }
            assignment[i] = best;
            dist[i] = sq(&x[i], &centers[best]);
        }
        for empty in 0..k {
            let size = |a: &Vec<usize>, c: usize| a.iter().filter(|&&v| v == c).count();
            if size(&assignment, empty) > 0 {
                continue;
            }
            let mut pick: Option<usize> = None;
            for i in 0..n {
                if size(&assignment, assignment[i]) >= 2 && pick.map_or(true, |j| dist[i] > dist[j]) {
                    pick = Some(i);
                }
            }
            let i = pick.unwrap();
            assignment[i] = empty;
            dist[i] = 0.0;
        }
        let mut means = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            for j in 0..d {
                means[assignment[i]][j] += x[i][j];
            }
            counts[assignment[i]] += 1;
        }
        for c in 0..k {
            for j in 0..d {
                means[c][j] /= counts[c] as f64;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            shift = shift.max(sq(&centers[c], &means[c]).sqrt());
        }
        centers = means;
        wcss.push((0..n).map(|i| sq(&x[i], &centers[assignment[i]])).sum());
        if shift < tol {
            break;
        }
    }
    Lloyd {
        assignment,
        means: centers,
        iterations,
        wcss,
    }
}

pub fn rbf(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    (-sq(u, v) / (2.0 * sigma * sigma)).exp()
}

/// Biased MMD² of one class by the three double sums.
pub fn mmd2_double_loop(xs: &[Vec<f64>], ys: &[Vec<f64>], sigma: f64) -> f64 {
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let mut sxx = 0.0;
    for a in xs {
        for b in xs {
            sxx += rbf(a, b, sigma);
        }
    }
    let mut syy = 0.0;
    for a in ys {
        for b in ys {
            syy += rbf(a, b, sigma);
        }
    }
    let mut sxy = 0.0;
    for a in xs {
        for b in ys {
            sxy += rbf(a, b, sigma);
        }
    }
    sxx / (n * n) + syy / (m * m) - 2.0 * sxy / (n * m)
}

/// Class-averaged MMD² over `(source rows, target rows)` groups.
pub fn class_mmd_double_loop(groups: &[(Vec<Vec<f64>>, Vec<Vec<f64>>)], sigma: f64) -> f64 {
    groups.iter().map(|(s, t)| mmd2_double_loop(s, t, sigma)).sum::<f64>() / groups.len() as f64
}

/// `(Σ v_i nll_i − thr Σ v_i) / n` for an explicit mask.
pub fn self_paced_objective(nll: &[f64], v: &[bool], thr: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..nll.len() {
        if v[i] {
            s += nll[i] - thr;
        }
    }
    s / nll.len() as f64
}

/// Minimum of the self-paced objective over all `2^n` masks.
pub fn brute_force_self_paced(nll: &[f64], thr: f64) -> f64 {
    let n = nll.len();
    let mut best = f64::INFINITY;
    for bits in 0u32..(1 << n) {
        let v: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        best = best.min(self_paced_objective(nll, &v, thr));
    }
    best
}
