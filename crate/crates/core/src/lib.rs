//! Kernel ridge classification with the elliptic kernel, its modulus random
//! feature approximation, and a software model of an optical random projector
//! (DMD encoding, scattering transmission matrix, camera).
//!
//! Module map:
//!
//! - [`elliptic`]: complete elliptic integrals and the closed-form kernel
//! - [`ridge`]: label encoding, primal/dual/kernel ridge, argmax scoring
//! - [`features`]: seeded complex projections, projected ridge, Gram convergence
//! - [`optical`]: DMD encoding, streamed transmission matrix, detector, binning
//! - [`featfile`]: the `SPKF` feature-matrix file format
//! - [`bench`]: MNIST ingestion and the experiment drivers
//! - [`rng`]: counter-based generator shared by every random matrix

pub mod bench;
pub mod elliptic;
mod error;
pub mod featfile;
pub mod features;
pub mod linalg;
pub mod optical;
pub mod ridge;
pub mod rng;

pub use error::{Error, Result};

pub use faer::{Mat, MatMut, MatRef};
