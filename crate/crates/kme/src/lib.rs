//! Differentially private release of weighted synthetic databases.
//!
//! The toolkit privatizes the kernel mean embedding (KME) of a private
//! dataset and publishes a small weighted synthetic dataset whose embedding
//! approximates it.  Two release paths are provided:
//!
//! * [`subspace::release_subspace`] — fix synthetic data points up front
//!   (sampled from a public prior, or a publishable subset of the data),
//!   project the empirical embedding onto their span, and privatize the
//!   finite coordinate vector with the Gaussian mechanism.
//! * [`rff::release_rff`] — approximate the kernel with random Fourier
//!   features, privatize the feature-space mean, and fit both weights and
//!   locations of the synthetic points to the privatized vector with a
//!   reduced-set optimizer.
//!
//! Supporting modules cover the kernel ([`kernel`]), RKHS expansions and
//! subspace projections ([`rkhs`]), the Gaussian mechanism ([`dp`]), dataset
//! generation and file formats ([`data`]), and the experiment harness that
//! reproduces the accuracy figures ([`eval`]).
//!
//! All randomness flows through seeded ChaCha8 generators; every seeded
//! entry point is bit-reproducible for a fixed crate version (dependency
//! versions are pinned by the lockfile).

pub mod data;
pub mod dp;
pub mod eval;
pub mod kernel;
pub mod rff;
pub mod rkhs;
pub mod subspace;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum KmeError {
    /// Vector or point dimensions disagree.
    #[error("dim mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    /// A coordinate, weight, or parameter was NaN or infinite.
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    /// Two expansions were combined but were built over different kernels.
    #[error("kernel mismatch between expansions")]
    KernelMismatch,

    /// Privacy parameters outside their valid domain.
    #[error("invalid privacy params: {0}")]
    InvalidPrivacy(String),

    /// A configuration value outside its valid domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A dataset or point list with no rows where at least one is required.
    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Malformed CSV content; `line` is 1-based.
    #[error("csv parse error at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },

    /// Malformed metadata sidecar.
    #[error("metadata error: {0}")]
    Metadata(String),

    /// Push-forward was asked of a release that carries no L1 bound.
    #[error("push-forward requires L1-bounded release")]
    NotL1Bounded,

    /// A numerical identity failed beyond tolerance (e.g. a squared RKHS
    /// distance came out significantly negative).
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KmeError>;

/// Mixes a master seed with stream labels into a derived seed.
///
/// SplitMix64 finalizer applied twice; used to hand independent, stable
/// streams to grid cells and per-dimension dataset generators so outputs do
/// not depend on scheduling or worker-pool size.
pub fn mix_seed(master: u64, tag: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(master ^ splitmix(tag)) ^ index)
}
