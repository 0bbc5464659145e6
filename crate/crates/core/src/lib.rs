//! Numerical toolkit for anisotropic fractional discrete Laplacians Δ^r on Z^d.

pub mod cli;
pub mod conjugate;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod fmt;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod resolvent;
pub mod scattering;
pub mod special;
pub mod symbol;

pub use error::{Error, Result};
