//! Language recognition over i-vectors.
//!
//! The crate covers the whole back end: i-vector preprocessing (centering,
//! whitening, length normalization, LDA), a cosine baseline, a GMM-UBM
//! subsystem with MAP-adapted language models, a feedforward network
//! subsystem, joint score/duration likelihood-ratio densities, linear
//! fusion with a duration quality term, open-set decisions and the
//! challenge cost metric. A seeded synthetic corpus generator stands in
//! for real challenge data.
//!
//! The processing order for every i-vector is fixed:
//! center/whiten → length-normalize → LDA.

pub mod baseline;
pub mod data_io;
pub mod dnn;
pub mod duration_fusion;
pub mod error;
pub mod fusion_eval;
pub mod gmm;
pub mod gmm_system;
pub mod linalg;
pub mod pipeline;
pub mod preprocess;
pub mod scores;

pub use error::{Error, Result};

/// Label carried by test segments that belong to none of the enrolled languages.
pub const OUT_OF_SET: &str = "out_of_set";

/// Version tag written into every JSON model file.
pub const FORMAT_VERSION: u32 = 1;

/// The generator behind every stochastic operation: ChaCha8 seeded from a `u64`.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
