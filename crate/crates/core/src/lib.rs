//! Landmark-matching Teichmüller maps between disk-type surfaces and
//! shape classification built on them.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: validated triangle meshes, landmarks, file formats and datasets
//! - [`sparse`]: sparse symmetric matrices and a direct Cholesky solver
//! - [`diffgeo`]: Beltrami coefficients, cotangent Laplacians and curvature
//! - [`param`]: conformal disk and rectangle parameterisations
//! - [`teichmuller`]: the linear Beltrami solver and the quasi-conformal iteration
//! - [`shape`]: shape index, vertex selection, classification and search
//! - [`synth`]: synthetic surface generators

pub mod diffgeo;
pub mod error;
pub mod mesh;
pub mod param;
pub mod shape;
pub mod sparse;
pub mod synth;
pub mod teichmuller;

pub use error::{Error, Result};
pub use mesh::{LandmarkSet, TriMesh};
