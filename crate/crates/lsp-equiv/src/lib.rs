pub mod error;
pub mod linalg;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod circulant;
pub mod basis_cov;
pub mod gaussianize;
pub mod cltcheck;
pub mod whitenoise;
pub mod harness;

pub use error::{Error, Result};
