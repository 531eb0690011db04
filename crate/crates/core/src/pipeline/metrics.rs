//! Evaluation, metrics records and their on-disk formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::ArrayView2;
use serde::Serialize;

use crate::alignment::LossBreakdown;
use crate::datagen::UnlabeledSet;
use crate::model::NetworkParams;
use crate::{Error, Result};

/// Accuracy and confusion counts of one classifier on one labeled set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    /// Scores predictions against ground truth.
    pub fn from_predictions(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        let mut correct = 0usize;
        for (&p, &t) in predicted.iter().zip(truth) {
            if p >= num_classes || t >= num_classes {
                return Err(Error::data(format!("label {} out of range for K={num_classes}", p.max(t))));
            }
            confusion[t][p] += 1;
            correct += usize::from(p == t);
        }
        let accuracy = if truth.is_empty() {
            0.0
        } else {
            correct as f64 / truth.len() as f64
        };
        Ok(Self { accuracy, confusion })
    }

    pub fn num_samples(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Argmax classification (ties to the lowest class) of `features`,
/// scored against `labels`.
pub fn evaluate(params: &NetworkParams, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Evaluation> {
    let trace = params.forward(features)?;
    Evaluation::from_predictions(&trace.predictions(), labels, params.num_classes())
}

/// [`evaluate`] on a target set; fails when it carries no hidden labels.
pub fn evaluate_target(params: &NetworkParams, target: &UnlabeledSet) -> Result<Evaluation> {
    let labels = target
        .hidden_labels()
        .ok_or_else(|| Error::data("target set has no hidden labels to evaluate against"))?;
    evaluate(params, target.features(), labels)
}

/// Fraction of positions where `labels[i] == truth[i]`; 0 for empty input.
pub fn label_accuracy(labels: &[usize], truth: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

/// Per-stage stats of the self-paced refinement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineStats {
    pub n: usize,
    pub threshold: f64,
    pub selected: usize,
    pub mean_nll: f64,
}

/// One line of `metrics.jsonl`. Fields that do not apply to a stage are
/// omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsRecord {
    /// Outer iteration, or pretraining epoch count for `pretrain`.
    pub epoch: usize,
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo_accuracy: Option<f64>,
    /// Pseudo-label accuracy restricted to the filtered target set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo_accuracy_filtered: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filtered_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmeans_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<RefineStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<usize>>>,
}

impl MetricsRecord {
    pub fn new(epoch: usize, stage: &str) -> Self {
        Self {
            epoch,
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Receives metrics as the pipeline produces them.
pub trait MetricsSink {
    fn record(&mut self, record: &MetricsRecord) -> Result<()>;
}

impl MetricsSink for Vec<MetricsRecord> {
    fn record(&mut self, record: &MetricsRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _: &MetricsRecord) -> Result<()> {
        Ok(())
    }
}

/// Appends one JSON object per line and flushes after each, so a failed run
/// keeps everything recorded before the failure.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl JsonlSink<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MetricsSink for JsonlSink<W> {
    fn record(&mut self, record: &MetricsRecord) -> Result<()> {
        writeln!(self.out, "{}", record.to_json()?)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Forwards every record to two sinks.
pub struct Tee<'a, A: MetricsSink + ?Sized, B: MetricsSink + ?Sized>(pub &'a mut A, pub &'a mut B);

impl<A: MetricsSink + ?Sized, B: MetricsSink + ?Sized> MetricsSink for Tee<'_, A, B> {
    fn record(&mut self, record: &MetricsRecord) -> Result<()> {
        self.0.record(record)?;
        self.1.record(record)
    }
}

/// Writes a confusion matrix as CSV: a header `true\pred,0,1,..`, then one
/// row per true class.
pub fn write_confusion_csv(path: &Path, confusion: &[Vec<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let k = confusion.len();
    let mut header = vec!["true\\pred".to_string()];
    header.extend((0..k).map(|c| c.to_string()));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for (t, row) in confusion.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
