//! Spherical geometry kernels for equirectangular panoramas.
//!
//! An equirectangular projection (ERP) maps the sphere onto a 2:1 rectangle
//! where columns are longitude and rows are latitude. The projection is
//! seamless left-to-right but heavily stretched toward the poles, which
//! breaks the usual flat-image assumptions of window attention and of
//! pixel-space losses. This crate provides the building blocks for working
//! with that geometry directly:
//!
//! - coordinate conversions among pixel, latitude/longitude, and unit-vector
//!   spaces, plus great-circle distance ([`sphere`]);
//! - exact circular column rotation and bipolar reprojection, which remaps a
//!   panorama so the polar regions land on the equator ([`remap`]);
//! - spherical-distance position embeddings: per-window curve local
//!   embedding tables, the global pairwise distance matrix, and a
//!   query-based conditional embedding over a feature pyramid ([`priors`]);
//! - window attention with a spherical-distance logit bias and a decoder
//!   block composing it with rotation and reprojection ([`attention`]);
//! - scale-and-shift-invariant depth alignment, losses with analytic
//!   gradients, and standard depth evaluation metrics ([`loss`],
//!   [`metrics`]);
//! - deterministic plumbing: PFM image files ([`pfm`]), canonical JSON
//!   reports ([`report`]), seeded demo construction ([`demo`]), and the
//!   command-line surface ([`cli`]).
//!
//! All scalar math is 64-bit. Every operation is a pure function of
//! immutable values, reductions run in a fixed order, and seeded demos are
//! bitwise reproducible across platforms.

pub mod attention;
pub mod cli;
pub mod demo;
pub mod loss;
pub mod mat;
pub mod metrics;
pub mod pfm;
pub mod priors;
pub mod remap;
pub mod report;
pub mod rng;
pub mod sphere;
pub mod tensor;

/// Crate-wide error type. Variants mirror the failure categories of the
/// kernel contracts; the CLI maps every variant to exit code 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric input lies outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Grid or matrix dimensions do not satisfy an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),
    /// Parameters are structurally inconsistent (missing table, bad head
    /// count, non-finite weight).
    #[error("configuration error: {0}")]
    Config(String),
    /// The input is numerically degenerate for the requested computation
    /// (too few valid pixels, constant prediction).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A file does not conform to its format. `offset` is the byte position
    /// at which the problem was detected, when known.
    #[error("format error at byte {}: {msg}", offset.map_or_else(|| "?".to_string(), |o| o.to_string()))]
    Format { msg: String, offset: Option<u64> },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
