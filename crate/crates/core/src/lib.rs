//! Dispersion and computational-cost analysis of higher-order finite element
//! methods on periodic tetrahedral meshes.

pub mod assembly;
pub mod dispersion;
pub mod elements;
pub mod error;
pub mod materials;
pub mod mesh;
pub mod optimize;
pub mod poly;
pub mod published;
pub mod quadrature;
pub mod sweep;
pub mod symbol;
pub mod tables;
pub mod timedomain;

pub use error::{Error, Result};
