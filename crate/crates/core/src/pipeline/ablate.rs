//! The ablation flag matrix and the τ sensitivity sweep.

use std::fmt::Write as _;

use super::config::{LossMode, PseudoSource, RunConfig};
use super::metrics::{MetricsSink, NullSink};
use super::run::{pretrain, run_with_pretrained, RunReport};
use crate::Result;

/// τ values of the sensitivity sweep; each sets `tau1 = tau2`.
pub const TAU_SWEEP: [f64; 5] = [0.05, 0.1, 0.3, 0.6, 1.0];

/// Headline numbers of one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub source_only_accuracy: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub mean_pseudo_accuracy: Option<f64>,
    /// Mean pseudo-label accuracy on the filtered set, over iterations where
    /// it was non-empty.
    pub mean_filtered_accuracy: Option<f64>,
    pub mean_filtered_size: f64,
}

impl AblationRow {
    pub fn from_report(name: &str, report: &RunReport) -> Self {
        let n = report.iterations.len().max(1) as f64;
        Self {
            name: name.to_string(),
            source_only_accuracy: report.source_only_accuracy(),
            target_accuracy: report.final_accuracy(),
            mean_pseudo_accuracy: report.mean_pseudo_accuracy(),
            mean_filtered_accuracy: report.filtered_vs_full().map(|p| p.0),
            mean_filtered_size: report.iterations.iter().map(|s| s.filtered_size as f64).sum::<f64>() / n,
        }
    }
}

/// The variants of the flag matrix, each derived from `base`.
pub fn ablation_variants(base: &RunConfig) -> Vec<(&'static str, RunConfig)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    vec![
        ("full", base.clone()),
        ("no_refinement", with(&|c| c.no_refinement = true)),
        ("no_confidence_check", with(&|c| c.no_confidence_check = true)),
        ("pseudo_source=net", with(&|c| c.pseudo_source = PseudoSource::Network)),
        ("loss=c2c", with(&|c| c.loss = LossMode::C2c)),
        ("loss=p2p", with(&|c| c.loss = LossMode::P2p)),
        ("loss=ce_hard", with(&|c| c.loss = LossMode::CeHard)),
    ]
}

/// One variant per τ in [`TAU_SWEEP`].
pub fn tau_variants(base: &RunConfig) -> Vec<(String, RunConfig)> {
    TAU_SWEEP
        .iter()
        .map(|&t| {
            let mut c = base.clone();
            c.tau1 = t;
            c.tau2 = t;
            (format!("tau={t}"), c)
        })
        .collect()
}

/// Runs every variant from one shared pretrained network. `sink_for` may
/// supply a metrics sink per variant.
pub fn run_variants<S: AsRef<str>>(
    base: &RunConfig,
    variants: &[(S, RunConfig)],
    mut sink_for: impl FnMut(&str) -> Result<Box<dyn MetricsSink>>,
) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let (source, target) = base.load_data()?;
    let pretrained = pretrain(base, &source, &mut NullSink).map_err(|e| e.in_stage("pretrain"))?;
    let mut rows = Vec::with_capacity(variants.len());
    for (name, cfg) in variants {
        let name = name.as_ref();
        log::info!("ablation variant {name}");
        let mut sink = sink_for(name)?;
        let report = run_with_pretrained(cfg, &source, &target, pretrained.clone(), sink.as_mut())?;
        rows.push(AblationRow::from_report(name, &report));
    }
    Ok(rows)
}

/// Fixed-width comparison table.
pub fn format_table(rows: &[AblationRow]) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
    let mut s = format!(
        "{:<22} {:>11} {:>11} {:>11} {:>11} {:>11}\n",
        "variant", "src_only", "target", "pseudo", "pseudo_D*", "|D*|"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<22} {:>11} {:>11} {:>11} {:>11} {:>11.1}",
            r.name,
            pct(r.source_only_accuracy),
            pct(r.target_accuracy),
            pct(r.mean_pseudo_accuracy),
            pct(r.mean_filtered_accuracy),
            r.mean_filtered_size
        );
    }
    s
}
