//! Tanh MLP feature extractor with a linear softmax classifier, exact
//! reverse-mode gradients, and SGD with momentum on an annealed schedule.
//!
//! Default architecture is `d → 64 → 32 → K`. All numerics are `f64`.

mod checkpoint;
mod loss;
mod network;
mod optim;

pub use checkpoint::{params_to_bytes, read_params, write_params, PARAMS_MAGIC};
pub(crate) use checkpoint::{read_f64s, read_u32, write_f64s, write_u32};
pub use loss::{cross_entropy, cross_entropy_grad, per_sample_nll};
pub(crate) use loss::weighted_nll_grad;
pub use network::{argmax_rows, softmax_rows, Dense, ForwardTrace, GradientSet, NetworkParams, Upstream};
pub use optim::{sgd_step, LrSchedule, OptimizerState, SgdConfig};

/// Hidden layer widths used unless configured otherwise.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];
