//! Full adaptation run on the rotated-Gaussian benchmark.
//!
//! ```text
//! cargo run --release --example end_to_end [config-file]
//! ```

use std::time::Instant;

use cauda::pipeline::{run, summary_text, MetricsRecord, RunConfig};

fn main() -> cauda::Result<()> {
    env_logger::init();
    let config = match std::env::args().nth(1) {
        Some(path) => RunConfig::from_file(path.as_ref())?,
        None => RunConfig::default(),
    };

    let start = Instant::now();
    let mut records: Vec<MetricsRecord> = Vec::new();
    let report = run(&config, &mut records)?;

    println!("iter  pseudo  filtered  |D*|  target");
    for s in &report.iterations {
        println!(
            "{:>4}  {:>6.3}  {:>8}  {:>4}  {:>6.3}",
            s.epoch,
            s.pseudo_accuracy.unwrap_or(f64::NAN),
            s.pseudo_accuracy_filtered.map_or("-".into(), |v| format!("{v:.3}")),
            s.filtered_size,
            s.target_accuracy.unwrap_or(f64::NAN),
        );
    }
    print!("{}", summary_text(&report));
    println!("{} metrics records in {:.1?}", records.len(), start.elapsed());
    Ok(())
}
