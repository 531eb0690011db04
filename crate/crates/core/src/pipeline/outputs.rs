//! Files written into a run's output directory.

use std::fmt::Write as _;
use std::path::Path;

use super::checkpoint::save_checkpoint;
use super::metrics::write_confusion_csv;
use super::run::RunReport;
use crate::Result;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Final accuracy table of a run.
pub fn summary_text(report: &RunReport) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.2}%", 100.0 * x));
    let mut s = String::new();
    let _ = writeln!(s, "{:<32} {:>10}", "source accuracy", pct(Some(report.final_source.accuracy)));
    let _ = writeln!(s, "{:<32} {:>10}", "source-only target accuracy", pct(report.source_only_accuracy()));
    let _ = writeln!(s, "{:<32} {:>10}", "adapted target accuracy", pct(report.final_accuracy()));
    let _ = writeln!(s, "{:<32} {:>10}", "mean pseudo-label accuracy", pct(report.mean_pseudo_accuracy()));
    let (filtered, full) = report.filtered_vs_full().map_or((None, None), |(a, b)| (Some(a), Some(b)));
    let _ = writeln!(s, "{:<32} {:>10}", "  on filtered set", pct(filtered));
    let _ = writeln!(s, "{:<32} {:>10}", "  on full set, same iterations", pct(full));
    if let Some(last) = report.iterations.last() {
        let _ = writeln!(s, "{:<32} {:>10}", "final filtered set size", last.filtered_size);
    }
    s
}

/// Writes `confusion.csv` (final target evaluation, if labels exist),
/// `checkpoint.bin` and `summary.txt`. `metrics.jsonl` is streamed during
/// the run.
pub fn write_run_outputs(dir: &Path, report: &RunReport) -> Result<()> {
    if let Some(eval) = &report.final_target {
        write_confusion_csv(&dir.join(CONFUSION_FILE), &eval.confusion)?;
    }
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &report.params, report.target_centroids.as_ref())?;
    std::fs::write(dir.join(SUMMARY_FILE), summary_text(report))?;
    Ok(())
}
