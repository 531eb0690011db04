//! Run configuration and its `key = value` text format.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown keys are rejected. Every key is optional; defaults reproduce the
//! reference benchmark (four rotated Gaussian classes, seed 7).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::alignment::{KernelSpec, Objective};
use crate::datagen::{self, LabeledSet, ShiftSpec, UnlabeledSet};
use crate::model::{LrSchedule, SgdConfig, DEFAULT_HIDDEN};
use crate::refinement::SelfPacedSchedule;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Gaussian,
    Moons,
    /// Pre-extracted features: a labeled source CSV and a target CSV whose
    /// label column is hidden ground truth (or `-1`).
    Csv { source: PathBuf, target: PathBuf },
}

/// Where the target pseudo-labels come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PseudoSource {
    /// k-means plus optimal assignment.
    OptimalAssignment,
    /// Argmax of the main network.
    Network,
}

/// Which alignment objective the main network is trained with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    /// Both discrepancy terms plus source cross-entropy.
    Da,
    C2c,
    P2p,
    /// Cross-entropy on hard target pseudo-labels instead of discrepancies.
    CeHard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub num_classes: usize,
    pub dim: usize,
    pub shift: ShiftSpec,
    pub moons_n_source: usize,
    pub moons_n_target: usize,

    pub hidden: Vec<usize>,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub pretrain_epochs: usize,

    pub schedule: SelfPacedSchedule,

    pub tau1: f64,
    pub tau2: f64,
    pub kernel: KernelSpec,
    /// Classes per alignment batch; `None` means `min(K, 4)`.
    pub class_batch: Option<usize>,
    pub source_per_class: usize,
    pub target_per_class: usize,
    pub outer_iterations: usize,
    pub align_epochs: usize,

    pub centroid_alpha: f64,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,

    pub seed: u64,

    pub no_refinement: bool,
    pub no_confidence_check: bool,
    pub pseudo_source: PseudoSource,
    pub loss: LossMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Gaussian,
            num_classes: 4,
            dim: 2,
            shift: ShiftSpec::default(),
            moons_n_source: 400,
            moons_n_target: 400,
            hidden: DEFAULT_HIDDEN.to_vec(),
            sgd: SgdConfig::default(),
            batch_size: 32,
            pretrain_epochs: 30,
            schedule: SelfPacedSchedule::default(),
            tau1: 0.3,
            tau2: 0.3,
            kernel: KernelSpec::Median,
            class_batch: None,
            source_per_class: 8,
            target_per_class: 8,
            outer_iterations: 20,
            align_epochs: 5,
            centroid_alpha: 1.0,
            kmeans_max_iters: crate::clustering::DEFAULT_MAX_ITERS,
            kmeans_tol: crate::clustering::DEFAULT_TOL,
            seed: 7,
            no_refinement: false,
            no_confidence_check: false,
            pseudo_source: PseudoSource::OptimalAssignment,
            loss: LossMode::Da,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()
    }

    /// Sets one key. Values are validated as a whole by [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => {
                self.data = match value {
                    "gaussian" => DataSource::Gaussian,
                    "moons" => DataSource::Moons,
                    "csv" => DataSource::Csv {
                        source: PathBuf::new(),
                        target: PathBuf::new(),
                    },
                    other => return Err(Error::config(format!("unknown data source `{other}`"))),
                }
            }
            "source_csv" | "target_csv" => {
                let (mut s, mut t) = match &self.data {
                    DataSource::Csv { source, target } => (source.clone(), target.clone()),
                    _ => (PathBuf::new(), PathBuf::new()),
                };
                if key == "source_csv" {
                    s = PathBuf::from(value);
                } else {
                    t = PathBuf::from(value);
                }
                self.data = DataSource::Csv { source: s, target: t };
            }
            "num_classes" => self.num_classes = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "rotation_deg" => self.shift.rotation_deg = parse(key, value)?,
            "translation" => self.shift.translation = parse_list(key, value)?,
            "class_sep" => self.shift.class_sep = parse(key, value)?,
            "noise_std" => self.shift.noise_std = parse(key, value)?,
            "samples_per_class_source" => self.shift.samples_per_class_source = parse(key, value)?,
            "samples_per_class_target" => self.shift.samples_per_class_target = parse(key, value)?,
            "moons_n_source" => self.moons_n_source = parse(key, value)?,
            "moons_n_target" => self.moons_n_target = parse(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "eta0_extractor" => self.sgd.eta0_extractor = parse(key, value)?,
            "eta0_classifier" => self.sgd.eta0_classifier = parse(key, value)?,
            "momentum" => self.sgd.momentum = parse(key, value)?,
            "weight_decay" => self.sgd.weight_decay = parse(key, value)?,
            "sched_alpha" => self.sgd.schedule.alpha = parse(key, value)?,
            "sched_beta" => self.sgd.schedule.beta = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, value)?,
            "lambda" => self.schedule.lambda = parse(key, value)?,
            "gamma" => self.schedule.gamma = parse(key, value)?,
            "n_max" => self.schedule.n_max = parse(key, value)?,
            "tau1" => self.tau1 = parse(key, value)?,
            "tau2" => self.tau2 = parse(key, value)?,
            "tau" => {
                self.tau1 = parse(key, value)?;
                self.tau2 = self.tau1;
            }
            "kernel" => {
                self.kernel = if value == "median" {
                    KernelSpec::Median
                } else {
                    KernelSpec::Fixed(parse(key, value)?)
                }
            }
            "class_batch" => {
                self.class_batch = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "source_per_class" => self.source_per_class = parse(key, value)?,
            "target_per_class" => self.target_per_class = parse(key, value)?,
            "outer_iterations" => self.outer_iterations = parse(key, value)?,
            "align_epochs" => self.align_epochs = parse(key, value)?,
            "centroid_alpha" => self.centroid_alpha = parse(key, value)?,
            "kmeans_max_iters" => self.kmeans_max_iters = parse(key, value)?,
            "kmeans_tol" => self.kmeans_tol = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "no_refinement" => self.no_refinement = parse_bool(key, value)?,
            "no_confidence_check" => self.no_confidence_check = parse_bool(key, value)?,
            "pseudo_source" => {
                self.pseudo_source = match value {
                    "oa" => PseudoSource::OptimalAssignment,
                    "net" => PseudoSource::Network,
                    other => return Err(Error::config(format!("pseudo_source must be oa or net, got `{other}`"))),
                }
            }
            "loss" => {
                self.loss = match value {
                    "da" => LossMode::Da,
                    "c2c" => LossMode::C2c,
                    "p2p" => LossMode::P2p,
                    "ce_hard" => LossMode::CeHard,
                    other => return Err(Error::config(format!("unknown loss mode `{other}`"))),
                }
            }
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be >= 2"));
        }
        if self.dim < 2 {
            return Err(Error::config("dim must be >= 2"));
        }
        if matches!(self.data, DataSource::Gaussian) {
            self.shift.validate(self.dim)?;
        }
        if let DataSource::Csv { source, target } = &self.data {
            for (name, p) in [("source_csv", source), ("target_csv", target)] {
                if p.as_os_str().is_empty() {
                    return Err(Error::config(format!("{name} is required when data = csv")));
                }
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        self.sgd.validate()?;
        self.schedule.validate()?;
        self.kernel.validate()?;
        if self.batch_size == 0 || self.source_per_class == 0 || self.target_per_class == 0 {
            return Err(Error::config("batch sizes must be >= 1"));
        }
        if self.class_batch == Some(0) {
            return Err(Error::config("class_batch must be >= 1"));
        }
        for (name, v) in [("tau1", self.tau1), ("tau2", self.tau2), ("centroid_alpha", self.centroid_alpha)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be >= 0")));
            }
        }
        if self.kmeans_max_iters == 0 || !(self.kmeans_tol >= 0.0) {
            return Err(Error::config("kmeans_max_iters must be >= 1 and kmeans_tol >= 0"));
        }
        Ok(())
    }

    /// Classes per alignment batch after resolving `auto`.
    pub fn class_batch_size(&self, num_classes: usize) -> usize {
        self.class_batch.unwrap_or(num_classes.min(4))
    }

    /// Alignment objective implied by `loss`, `tau1`, `tau2` and `kernel`.
    pub fn objective(&self) -> Objective {
        let (tau1, tau2, target_ce) = match self.loss {
            LossMode::Da => (self.tau1, self.tau2, 0.0),
            LossMode::C2c => (self.tau1, 0.0, 0.0),
            LossMode::P2p => (0.0, self.tau2, 0.0),
            LossMode::CeHard => (0.0, 0.0, 1.0),
        };
        Objective {
            tau1,
            tau2,
            target_ce,
            feature_kernel: self.kernel,
            prob_kernel: self.kernel,
        }
    }

    pub fn schedule_shape(&self) -> LrSchedule {
        self.sgd.schedule
    }

    /// Builds or reads the source and target sets.
    pub fn load_data(&self) -> Result<(LabeledSet, UnlabeledSet)> {
        match &self.data {
            DataSource::Gaussian => datagen::generate_gaussian_pair(&self.shift, self.num_classes, self.dim, self.seed),
            DataSource::Moons => datagen::generate_two_moons_pair(
                self.shift.noise_std,
                self.shift.rotation_deg,
                self.moons_n_source,
                self.moons_n_target,
                self.seed,
            ),
            DataSource::Csv { source, target } => {
                for p in [source, target] {
                    if !p.exists() {
                        return Err(Error::config(format!("data file {} does not exist", p.display())));
                    }
                }
                let s = datagen::load_labeled_csv(source, None)?;
                let t = datagen::load_unlabeled_csv(target, Some(s.num_classes()))?;
                if s.dim() != t.dim() {
                    return Err(Error::data(format!(
                        "source has {} features, target {}",
                        s.dim(),
                        t.dim()
                    )));
                }
                Ok((s, t))
            }
        }
    }

    /// Renders the configuration in the same `key = value` format it is
    /// read from.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.data {
            DataSource::Gaussian => s.push_str("data = gaussian\n"),
            DataSource::Moons => s.push_str("data = moons\n"),
            DataSource::Csv { source, target } => {
                let _ = writeln!(s, "data = csv\nsource_csv = {}\ntarget_csv = {}", source.display(), target.display());
            }
        }
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "rotation_deg = {}", self.shift.rotation_deg);
        if !self.shift.translation.is_empty() {
            let _ = writeln!(s, "translation = {}", list(&self.shift.translation));
        }
        let _ = writeln!(s, "class_sep = {}", self.shift.class_sep);
        let _ = writeln!(s, "noise_std = {}", self.shift.noise_std);
        let _ = writeln!(s, "samples_per_class_source = {}", self.shift.samples_per_class_source);
        let _ = writeln!(s, "samples_per_class_target = {}", self.shift.samples_per_class_target);
        let _ = writeln!(s, "moons_n_source = {}", self.moons_n_source);
        let _ = writeln!(s, "moons_n_target = {}", self.moons_n_target);
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "hidden = {}", hidden.join(","));
        let _ = writeln!(s, "eta0_extractor = {}", self.sgd.eta0_extractor);
        let _ = writeln!(s, "eta0_classifier = {}", self.sgd.eta0_classifier);
        let _ = writeln!(s, "momentum = {}", self.sgd.momentum);
        let _ = writeln!(s, "weight_decay = {}", self.sgd.weight_decay);
        let _ = writeln!(s, "sched_alpha = {}", self.sgd.schedule.alpha);
        let _ = writeln!(s, "sched_beta = {}", self.sgd.schedule.beta);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "pretrain_epochs = {}", self.pretrain_epochs);
        let _ = writeln!(s, "lambda = {}", self.schedule.lambda);
        let _ = writeln!(s, "gamma = {}", self.schedule.gamma);
        let _ = writeln!(s, "n_max = {}", self.schedule.n_max);
        let _ = writeln!(s, "tau1 = {}", self.tau1);
        let _ = writeln!(s, "tau2 = {}", self.tau2);
        match self.kernel {
            KernelSpec::Median => s.push_str("kernel = median\n"),
            KernelSpec::Fixed(v) => {
                let _ = writeln!(s, "kernel = {v}");
            }
        }
        match self.class_batch {
            None => s.push_str("class_batch = auto\n"),
            Some(v) => {
                let _ = writeln!(s, "class_batch = {v}");
            }
        }
        let _ = writeln!(s, "source_per_class = {}", self.source_per_class);
        let _ = writeln!(s, "target_per_class = {}", self.target_per_class);
        let _ = writeln!(s, "outer_iterations = {}", self.outer_iterations);
        let _ = writeln!(s, "align_epochs = {}", self.align_epochs);
        let _ = writeln!(s, "centroid_alpha = {}", self.centroid_alpha);
        let _ = writeln!(s, "kmeans_max_iters = {}", self.kmeans_max_iters);
        let _ = writeln!(s, "kmeans_tol = {}", self.kmeans_tol);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "no_refinement = {}", self.no_refinement);
        let _ = writeln!(s, "no_confidence_check = {}", self.no_confidence_check);
        let ps = match self.pseudo_source {
            PseudoSource::OptimalAssignment => "oa",
            PseudoSource::Network => "net",
        };
        let _ = writeln!(s, "pseudo_source = {ps}");
        let loss = match self.loss {
            LossMode::Da => "da",
            LossMode::C2c => "c2c",
            LossMode::P2p => "p2p",
            LossMode::CeHard => "ce_hard",
        };
        let _ = writeln!(s, "loss = {loss}");
        s
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("bad boolean `{value}` for `{key}`"))),
    }
}
