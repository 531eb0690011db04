//! End-to-end orchestration: configuration, pretraining, the adaptation
//! loop, evaluation, ablations and output files.

mod ablate;
mod checkpoint;
mod config;
mod metrics;
mod outputs;
mod run;

pub use ablate::*;
pub use checkpoint::*;
pub use config::*;
pub use metrics::*;
pub use outputs::*;
pub use run::*;
