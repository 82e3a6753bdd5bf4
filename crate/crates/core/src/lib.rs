//! Phase retrieval from continuous short-time Fourier magnitudes.

pub mod deconv;
pub mod error;
pub mod experiments;
pub mod hio;
pub mod measure;
pub mod recon;
pub mod rng;
pub mod signals;
pub mod spectral;
pub mod sync;

pub use error::{Error, Result};
