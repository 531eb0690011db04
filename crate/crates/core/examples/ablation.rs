//! Runs the ablation flag matrix (or, with `--sweep-tau`, the τ sweep) on
//! the benchmark from one shared pretrained network.

use cauda::pipeline::{ablation_variants, format_table, run_variants, tau_variants, NullSink, RunConfig};

fn main() -> cauda::Result<()> {
    env_logger::init();
    let base = RunConfig::default();
    let variants: Vec<(String, RunConfig)> = if std::env::args().any(|a| a == "--sweep-tau") {
        tau_variants(&base)
    } else {
        ablation_variants(&base).into_iter().map(|(n, c)| (n.to_string(), c)).collect()
    };
    let rows = run_variants(&base, &variants, |_| Ok(Box::new(NullSink)))?;
    print!("{}", format_table(&rows));
    Ok(())
}
