//! Boundary-layer flows of rotating fluids over rough bottoms.
//!
//! The crate builds the flow in two pieces glued at an artificial interface
//! `y₃ = M`: a terrain-following strip solver below and a spectral half-space
//! solver above, matched by a generalized-stress transmission condition.

pub mod error;
pub mod export;
pub mod fixpoint;
pub mod green;
pub mod halfspace;
pub mod linalg;
pub mod roots;
pub mod run;
pub mod scenario;
pub mod spectral;
pub mod strip;
pub mod transmission;
pub mod verify;
pub mod vertical;

pub use error::{EkblError, Result};
pub use num_complex::Complex64 as C64;
