//! Toolkit for turning static triangle meshes plus kinematic metadata into
//! articulated, simulation-ready assets.
//!
//! The stages are independent modules:
//!
//! - [`voxel`]: normalization, surface voxelization, occupancy grids
//! - [`codec`]: the sparse `<voxel> xyz K` token format
//! - [`vq`]: the sparse vector-quantized autoencoder with a reserved zero token
//! - [`segment`]: seed-driven part segmentation of the original mesh
//! - [`urdf`]: metadata parsing, kinematic tree construction, URDF emission
//! - [`metrics`]: articulation and geometry evaluation
//! - [`pipeline`]: end-to-end orchestration used by the CLI
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled.

// Index loops mirror the math in the numeric kernels, and `!(x > 0.0)` is
// the deliberate NaN-rejecting form of validation checks.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod exec;
pub mod hull;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod segment;
pub mod shapes;
pub mod spatial;
pub mod urdf;
pub mod voxel;
pub mod vq;

pub use exec::Exec;
pub use mesh::{Mesh, MeshError};
