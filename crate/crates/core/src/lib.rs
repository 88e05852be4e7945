//! Multistage sampling of drifted Brownian motion until it crosses a boundary.
//!
//! * [`normal`]: normal distribution kernels, stage sizes and overshoot means.
//! * [`bands`]: critical functions, band classification and optimal-risk constants.
//! * [`sampler`]: geometric, interior-band, boundary-band and fixed-group samplers.
//! * [`mc`]: trajectory simulation and Monte Carlo risk estimation.
//! * [`seqtest`]: multistage tests of two simple Gaussian hypotheses.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod error;
pub mod mc;
pub mod normal;
pub mod report;
pub mod sampler;
pub mod seqtest;
pub mod stream;

pub use bands::{BandClass, BandKind, HSpec};
pub use error::{Error, Result};
pub use mc::{RiskEstimate, Trajectory};
pub use sampler::{Family, SamplerSpec, SamplerState};
