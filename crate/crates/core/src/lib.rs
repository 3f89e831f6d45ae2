//! Frequency-domain decomposition objectives for image translation.
//!
//! - [`spectral`]: centered DFT, Gaussian low/high transfer pair and band decomposition;
//! - [`diffnet`]: a reverse-mode tape with convolution, normalization and spectral
//!   filter nodes, plus the generator, discriminator and nonlinear pre-map builders;
//! - [`objectives`]: decomposition-consistency, cycle, paired, adversarial and
//!   high-frequency alignment losses;
//! - [`metrics`]: MSE, PSNR, SSIM and Fréchet distance of projection features;
//! - [`gradcheck`]: finite-difference verification of every node and loss.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision used by the training harness.

pub mod diffnet;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod objectives;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision of training and evaluation.
pub type Real = f64;
pub type Image = spectral::ImagePlane<Real>;
pub type Image32 = spectral::ImagePlane<f32>;
pub type Tensor64 = diffnet::Tensor<f64>;
pub type Tensor32 = diffnet::Tensor<f32>;
pub type Tape64 = diffnet::Tape<f64>;
pub type Tape32 = diffnet::Tape<f32>;
pub type Net = diffnet::Network<Real>;
pub type Filters = spectral::BandFilters<Real>;
