//! FEM-BEM coupling for the Poisson equation on randomly perturbed planar
//! domains, with multilevel quasi-Monte Carlo estimation of a boundary
//! functional.

#![allow(clippy::needless_range_loop)]

pub mod bem;
pub mod coupling;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod mlqmc;
pub mod quadrature;
pub mod validation;

pub use error::{Error, Result};
