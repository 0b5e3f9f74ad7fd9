//! Sentinel-2 to AVIRIS-level hyperspectral reconstruction.
//!
//! The pipeline simulates 12-band multiresolution products from reference
//! hyperspectral cubes, builds classical spatial/spectral priors, trains a
//! small convolutional discriminator, and reconstructs 186-band cubes with
//! a quasi-Split-Bregman solver whose A-update descends the sum of a
//! data-fitting gradient, a spectrum-regularization gradient, and a
//! discriminator vector-Jacobian product.

pub mod cli;
pub mod cube;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod operators;
pub mod prior;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
