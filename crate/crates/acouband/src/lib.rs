//! Wide-band analysis and topology optimisation of 2D acoustic scatterers.

pub mod analytic;
pub mod bem;
pub mod error;
pub mod fmm;
pub mod geom;
pub mod jet;
pub(crate) mod jetops;
pub mod mesh;
pub mod pade;
pub mod quadrature;
pub mod sensitivity;
pub mod specfun;

pub use error::{Error, Result};
