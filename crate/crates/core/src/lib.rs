//! Convolutional micro-engine and Gibbs-distribution probes.
//!
//! The crate trains two small CNNs on a synthetic dataset whose pixels are
//! exact samples of `N(0, 1024)`, then reads the trained layers back as
//! energy functions: per-location filter responses are histogrammed and
//! compared against the known pixel prior with a KL divergence.
//!
//! Layout:
//! - [`tensor`]: dense kernels (conv, pooling, ReLU, linear, softmax,
//!   cross-entropy) and their analytic gradients.
//! - [`data`]: the synthetic Gaussian-pixel digit dataset and its `GSYN` file format.
//! - [`network`]: architectures, forward capture, backprop, momentum SGD,
//!   `GCKP` checkpoints.
//! - [`probe`]: energy fields, histograms, KL divergence, and the
//!   product-of-experts and RBM energy identities.
//! - [`harness`]: the reproducible experiments, their CSV/JSON artifacts and SVG figures.

pub mod data;
pub mod error;
pub mod harness;
pub mod network;
pub mod probe;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Environment variable that caps worker threads (`0` or unset = automatic).
pub const THREADS_ENV: &str = "GIBBS_LENS_THREADS";

/// Configure the global rayon pool from [`THREADS_ENV`].
///
/// Safe to call more than once; only the first successful call takes effect.
pub fn configure_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a non-negative integer, got `{v}`"
            ))
        })?,
        _ => 0,
    };
    // Already-initialized pools are fine: results never depend on thread count.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}
