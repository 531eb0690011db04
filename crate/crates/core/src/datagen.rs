//! Synthetic source/target domain pairs and the CSV feature format.
//!
//! CSV layout: no header, one sample per row, `d` real feature columns
//! followed by one integer label column. A label of `-1` means the ground
//! truth is absent.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::{derive_seed, rng_from_seed, Error, Result};

/// Labeled source-domain samples.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledSet {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        check_finite(features.view())?;
        let mut counts = vec![0usize; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::data(format!("label {y} out of range for K={num_classes}")));
            }
            counts[y] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::data(format!("class {k} has no samples")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Drops the labels, keeping them as hidden ground truth.
    pub fn into_unlabeled(self) -> UnlabeledSet {
        UnlabeledSet {
            features: self.features,
            hidden_labels: Some(self.labels),
        }
    }
}

/// Target-domain samples. `hidden_labels` is only for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledSet {
    features: Array2<f64>,
    hidden_labels: Option<Vec<usize>>,
}

impl UnlabeledSet {
    pub fn new(features: Array2<f64>, hidden_labels: Option<Vec<usize>>) -> Result<Self> {
        check_finite(features.view())?;
        if let Some(h) = &hidden_labels {
            if h.len() != features.nrows() {
                return Err(Error::shape(format!(
                    "{} feature rows but {} hidden labels",
                    features.nrows(),
                    h.len()
                )));
            }
        }
        Ok(Self {
            features,
            hidden_labels,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn hidden_labels(&self) -> Option<&[usize]> {
        self.hidden_labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Checks hidden labels against a class count.
    pub fn validate_classes(&self, num_classes: usize) -> Result<()> {
        if let Some(h) = &self.hidden_labels {
            if let Some(&y) = h.iter().find(|&&y| y >= num_classes) {
                return Err(Error::data(format!(
                    "hidden label {y} out of range for K={num_classes}"
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of a synthetic Gaussian domain shift.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSpec {
    /// Rotation of the target domain in the plane of the first two features.
    pub rotation_deg: f64,
    /// Target offset; empty means zero. Otherwise must have length `dim`.
    pub translation: Vec<f64>,
    /// Radius of the circle carrying the class means.
    pub class_sep: f64,
    pub noise_std: f64,
    pub samples_per_class_source: usize,
    pub samples_per_class_target: usize,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            rotation_deg: 30.0,
            translation: Vec::new(),
            class_sep: 3.0,
            noise_std: 1.0,
            samples_per_class_source: 200,
            samples_per_class_target: 200,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.class_sep > 0.0) {
            return Err(Error::config("class_sep must be > 0"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be >= 0"));
        }
        if !self.rotation_deg.is_finite() {
            return Err(Error::config("rotation_deg must be finite"));
        }
        if self.samples_per_class_source == 0 || self.samples_per_class_target == 0 {
            return Err(Error::config("samples per class must be positive"));
        }
        if !self.translation.is_empty() && self.translation.len() != dim {
            return Err(Error::config(format!(
                "translation has {} entries, expected {dim}",
                self.translation.len()
            )));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("translation must be finite"));
        }
        Ok(())
    }
}

/// Class means of the source domain: evenly spaced on a circle of radius
/// `class_sep` in the first two dimensions, zero elsewhere.
pub fn source_class_means(spec: &ShiftSpec, num_classes: usize, dim: usize) -> Array2<f64> {
    let mut means = Array2::zeros((num_classes, dim));
    for k in 0..num_classes {
        let angle = 2.0 * PI * k as f64 / num_classes as f64;
        means[[k, 0]] = spec.class_sep * angle.cos();
        means[[k, 1]] = spec.class_sep * angle.sin();
    }
    means
}

/// Class means of the target domain: the source means pushed through the
/// same rotation and translation applied to target samples.
pub fn target_class_means(spec: &ShiftSpec, num_classes: usize, dim: usize) -> Array2<f64> {
    let mut means = source_class_means(spec, num_classes, dim);
    let shift = Shift::new(spec.rotation_deg, &spec.translation, [0.0, 0.0]);
    for mut row in means.rows_mut() {
        shift.apply(row.as_slice_mut().expect("standard layout"));
    }
    means
}

/// Generates `K` isotropic Gaussian blobs as the source domain and the same
/// blobs, rotated and translated, as the target domain.
pub fn generate_gaussian_pair(
    spec: &ShiftSpec,
    num_classes: usize,
    dim: usize,
    seed: u64,
) -> Result<(LabeledSet, UnlabeledSet)> {
    if num_classes < 2 {
        return Err(Error::config("num_classes must be >= 2"));
    }
    if dim < 2 {
        return Err(Error::config("dim must be >= 2"));
    }
    spec.validate(dim)?;

    let means = source_class_means(spec, num_classes, dim);
    let shift = Shift::new(spec.rotation_deg, &spec.translation, [0.0, 0.0]);

    let blob = |per_class: usize, stream: u64, shift: Option<&Shift>| {
        let mut rng = rng_from_seed(derive_seed(seed, stream));
        let n = per_class * num_classes;
        let mut x = Array2::zeros((n, dim));
        let mut y = Vec::with_capacity(n);
        for k in 0..num_classes {
            for i in 0..per_class {
                let mut row = x.row_mut(k * per_class + i);
                for (j, v) in row.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = means[[k, j]] + spec.noise_std * z;
                }
                if let Some(s) = shift {
                    s.apply(row.as_slice_mut().expect("standard layout"));
                }
                y.push(k);
            }
        }
        (x, y)
    };

    let (xs, ys) = blob(spec.samples_per_class_source, 1, None);
    let (xt, yt) = blob(spec.samples_per_class_target, 2, Some(&shift));
    Ok((
        LabeledSet::new(xs, ys, num_classes)?,
        UnlabeledSet::new(xt, Some(yt))?,
    ))
}

/// Two interleaved half circles (K = 2) as the source domain; the target is
/// the same construction rotated by `rotation_deg` about the moons' center.
pub fn generate_two_moons_pair(
    noise_std: f64,
    rotation_deg: f64,
    n_source: usize,
    n_target: usize,
    seed: u64,
) -> Result<(LabeledSet, UnlabeledSet)> {
    if !(noise_std >= 0.0) {
        return Err(Error::config("noise_std must be >= 0"));
    }
    if n_source < 2 || n_target < 2 {
        return Err(Error::config("two moons needs at least 2 samples per domain"));
    }
    if !rotation_deg.is_finite() {
        return Err(Error::config("rotation_deg must be finite"));
    }

    let moons = |n: usize, stream: u64, shift: Option<&Shift>| {
        let mut rng = rng_from_seed(derive_seed(seed, stream));
        let n_outer = n.div_ceil(2);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = usize::from(i >= n_outer);
            let t: f64 = rng.random_range(0.0..=PI);
            let (mut px, mut py) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            px += noise_std * nx;
            py += noise_std * ny;
            let mut p = [px, py];
            if let Some(s) = shift {
                s.apply(&mut p);
            }
            x[[i, 0]] = p[0];
            x[[i, 1]] = p[1];
            y.push(class);
        }
        (x, y)
    };

    let shift = Shift::new(rotation_deg, &[], MOONS_CENTER);
    let (xs, ys) = moons(n_source, 1, None);
    let (xt, yt) = moons(n_target, 2, Some(&shift));
    Ok((LabeledSet::new(xs, ys, 2)?, UnlabeledSet::new(xt, Some(yt))?))
}

/// Center of the two-moons construction; the target rotates about it.
pub const MOONS_CENTER: [f64; 2] = [0.5, 0.25];

struct Shift<'a> {
    cos: f64,
    sin: f64,
    translation: &'a [f64],
    pivot: [f64; 2],
}

impl<'a> Shift<'a> {
    fn new(rotation_deg: f64, translation: &'a [f64], pivot: [f64; 2]) -> Self {
        let r = rotation_deg.to_radians();
        Self {
            cos: r.cos(),
            sin: r.sin(),
            translation,
            pivot,
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let (a, b) = (x[0] - self.pivot[0], x[1] - self.pivot[1]);
        x[0] = self.cos * a - self.sin * b + self.pivot[0];
        x[1] = self.sin * a + self.cos * b + self.pivot[1];
        for (v, t) in x.iter_mut().zip(self.translation) {
            *v += t;
        }
    }
}

fn check_finite(x: ArrayView2<'_, f64>) -> Result<()> {
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite feature in row {i}")));
        }
    }
    Ok(())
}

/// Result of [`load_csv`].
#[derive(Clone, Debug, PartialEq)]
pub enum LoadedSet {
    Labeled(LabeledSet),
    Unlabeled(UnlabeledSet),
}

/// Reads a feature CSV.
///
/// With `labeled`, every label must be a class index and `K` is taken from
/// `num_classes` or inferred as `max label + 1`. Without it, the label column
/// becomes hidden ground truth: all `-1` means none is available.
pub fn load_csv(path: &Path, labeled: bool, num_classes: Option<usize>) -> Result<LoadedSet> {
    let (features, labels) = read_rows(path)?;
    if labeled {
        let mut ys = Vec::with_capacity(labels.len());
        for (row, &y) in labels.iter().enumerate() {
            if y < 0 {
                return Err(parse_err(path, row, "missing label (-1) in labeled set"));
            }
            ys.push(y as usize);
        }
        let k = match num_classes {
            Some(k) => k,
            None => ys.iter().max().map_or(0, |m| m + 1),
        };
        if let Some(row) = ys.iter().position(|&y| y >= k) {
            return Err(parse_err(path, row, &format!("label {} >= K={k}", ys[row])));
        }
        Ok(LoadedSet::Labeled(LabeledSet::new(features, ys, k)?))
    } else {
        let missing = labels.iter().filter(|&&y| y < 0).count();
        let hidden = if missing == labels.len() {
            None
        } else if missing == 0 {
            let ys: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
            if let Some(k) = num_classes {
                if let Some(row) = ys.iter().position(|&y| y >= k) {
                    return Err(parse_err(path, row, &format!("label {} >= K={k}", ys[row])));
                }
            }
            Some(ys)
        } else {
            let row = labels.iter().position(|&y| y < 0).unwrap_or(0);
            return Err(parse_err(
                path,
                row,
                "hidden labels must be given for every row or for none",
            ));
        };
        Ok(LoadedSet::Unlabeled(UnlabeledSet::new(features, hidden)?))
    }
}

pub fn load_labeled_csv(path: &Path, num_classes: Option<usize>) -> Result<LabeledSet> {
    match load_csv(path, true, num_classes)? {
        LoadedSet::Labeled(s) => Ok(s),
        LoadedSet::Unlabeled(_) => unreachable!("labeled load returns a labeled set"),
    }
}

pub fn load_unlabeled_csv(path: &Path, num_classes: Option<usize>) -> Result<UnlabeledSet> {
    match load_csv(path, false, num_classes)? {
        LoadedSet::Unlabeled(s) => Ok(s),
        LoadedSet::Labeled(_) => unreachable!("unlabeled load returns an unlabeled set"),
    }
}

fn parse_err(path: &Path, row: usize, msg: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row: row + 1,
        msg: msg.to_string(),
    }
}

fn read_rows(path: &Path) -> Result<(Array2<f64>, Vec<i64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::data(format!("{}: {other:?}", path.display())),
        })?;

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, row, &e.to_string()))?;
        if record.len() < 2 {
            return Err(parse_err(path, row, "need at least one feature and a label"));
        }
        let d = record.len() - 1;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(parse_err(path, row, &format!("expected {w} features, found {d}")))
            }
            _ => {}
        }
        for field in record.iter().take(d) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, row, &format!("bad number `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, row, &format!("non-finite feature `{field}`")));
            }
            flat.push(v);
        }
        let label = &record[d];
        let y: i64 = label
            .parse()
            .map_err(|_| parse_err(path, row, &format!("bad label `{label}`")))?;
        if y < -1 {
            return Err(parse_err(path, row, &format!("bad label `{label}`")));
        }
        labels.push(y);
    }
    let d = width.ok_or_else(|| Error::data(format!("{}: empty file", path.display())))?;
    let x = Array2::from_shape_vec((labels.len(), d), flat).expect("row widths checked");
    Ok((x, labels))
}

/// Writes features plus a label column (`-1` where `labels` is `None`).
///
/// Floats use Rust's shortest round-trip formatting, so reading the file
/// back reproduces the values exactly.
pub fn write_csv(path: &Path, features: ArrayView2<'_, f64>, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != features.nrows() {
            return Err(Error::shape("label count differs from row count"));
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    for (i, row) in features.axis_iter(Axis(0)).enumerate() {
        write_row(&mut out, row)?;
        match labels {
            Some(l) => writeln!(out, ",{}", l[i])?,
            None => writeln!(out, ",-1")?,
        }
    }
    out.flush()?;
    Ok(())
}

fn write_row(out: &mut impl Write, row: ArrayView1<'_, f64>) -> std::io::Result<()> {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            out.write_all(b",")?;
        }
        write!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn write_labeled_csv(path: &Path, set: &LabeledSet) -> Result<()> {
    write_csv(path, set.features(), Some(set.labels()))
}

pub fn write_unlabeled_csv(path: &Path, set: &UnlabeledSet) -> Result<()> {
    write_csv(path, set.features(), set.hidden_labels())
}

/// Mean feature vector of each class.
pub fn class_means(features: ArrayView2<'_, f64>, labels: &[usize], num_classes: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((num_classes, features.ncols()));
    let mut counts = Array1::<f64>::zeros(num_classes);
    for (row, &y) in features.axis_iter(Axis(0)).zip(labels) {
        let mut s = sums.row_mut(y);
        s += &row;
        counts[y] += 1.0;
    }
    for (mut s, &c) in sums.axis_iter_mut(Axis(0)).zip(counts.iter()) {
        if c > 0.0 {
            s /= c;
        }
    }
    sums
}
