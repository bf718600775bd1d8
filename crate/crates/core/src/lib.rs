//! Unfitted concurrent multiscale linear elasticity on a single background
//! mesh: level-set geometry, cut-cell quadrature, smooth scale mixing,
//! ghost-penalty stabilization, and Mori-Tanaka homogenization of the
//! macro material.

pub mod assembly;
pub mod cutgeom;
pub mod driver;
pub mod error;
pub mod homogenize;
pub mod levelset;
pub mod mesh;
pub mod mixing;
pub mod post;
pub mod scenario;
pub mod solve;
pub mod sparse;

pub use error::{Error, ErrorCategory, Result};
