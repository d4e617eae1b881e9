//! Emulation of a phase-coded-aperture extended-depth-of-field camera.
//!
//! The crate models the full acquisition/reconstruction chain: per-channel
//! depth-dependent blur kernels generated from a pupil-plane phase mask
//! ([`optics`]), Bayer capture with sensor noise ([`sensor`]), sparse patch
//! recovery over a concatenated blurred dictionary ([`sparse`]), the unrolled
//! fixed-depth network derived from the iterative solver ([`network`]), a
//! bit-exact 16-bit calculator emulation with a clock-cycle throughput model
//! ([`fixedpoint`]), and whole-image reconstruction with quality metrics
//! ([`pipeline`]).
//!
//! All floating-point math is generic over the scalar type through the
//! [`Scalar`] trait; `f64` aliases for the main types live at the crate root
//! and are what the CLI and the experiment drivers use.

use std::fmt;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub mod container;
pub mod fixedpoint;
pub mod imageio;
pub mod linalg;
pub mod network;
pub mod optics;
pub mod oracles;
pub mod pipeline;
pub mod sensor;
pub mod sparse;
pub mod synth;

/// Floating-point scalar usable throughout the simulation: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for conversion from `f64` (always representable for
    /// `f32`/`f64`, possibly with rounding).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Errors produced by the simulation and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

// Concrete f64 aliases for the types the CLI and experiments work with.
pub type Matrix64 = linalg::Matrix<f64>;
pub type OpticsSpec64 = optics::OpticsSpec<f64>;
pub type PhaseMaskSpec64 = optics::PhaseMaskSpec<f64>;
pub type BlurKernelSet64 = optics::BlurKernelSet<f64>;
pub type RgbImage64 = sensor::RgbImage<f64>;
pub type RawBayerImage64 = sensor::RawBayerImage<f64>;
pub type Dictionary64 = sparse::Dictionary<f64>;
pub type ConcatDictionary64 = sparse::ConcatDictionary<f64>;
pub type SolverConfig64 = sparse::SolverConfig<f64>;
pub type NetworkParams64 = network::NetworkParams<f64>;
pub type TrainConfig64 = network::TrainConfig<f64>;
