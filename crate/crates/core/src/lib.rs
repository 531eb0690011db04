//! Class-aware unsupervised domain adaptation.
//!
//! A labeled source domain and an unlabeled target domain share `K` classes.
//! Training alternates three stages after a supervised warm start:
//!
//! 1. **Optimal assignment** ([`clustering`], [`assignment`]): k-means on the
//!    target embeddings, seeded from the source class centroids, followed by a
//!    Hungarian matching of target clusters to source classes. Every target
//!    sample inherits the class of its matched cluster as a pseudo-label.
//! 2. **Refinement** ([`refinement`]): an auxiliary network that only ever
//!    sees target data is trained on the pseudo-labels with a self-paced
//!    easy-to-hard schedule; a confidence check then keeps the target samples
//!    whose pseudo-label it finds likely.
//! 3. **Class-aware alignment** ([`alignment`]): class-matched source/target
//!    batches are pulled together with per-class MMD on the feature
//!    embeddings and on the softmax outputs, plus source cross-entropy.
//!
//! [`pipeline`] orchestrates the stages, handles configuration and metrics,
//! and backs the `cauda` binary. [`datagen`] builds synthetic domain-shift
//! problems and reads/writes the CSV feature format.

pub mod alignment;
pub mod assignment;
pub mod clustering;
pub mod datagen;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod refinement;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used everywhere in the crate. ChaCha keeps streams identical across
/// platforms so fixed seeds reproduce bit-for-bit.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed for a named sub-stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
