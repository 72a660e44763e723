//! Reconstruction of star-shaped flow domains, boundary-conforming velocity
//! fields and wall shear stress from voxelized magnitude and phase-contrast
//! image data.
//!
//! The pipeline has three stages, each a Tikhonov-regularized inverse problem
//! or a post-processing step on its output:
//!
//! 1. [`geo_ident`]: fit a truncated Fourier radius function to a normalized
//!    magnitude image with a projected Gauss–Newton method.
//! 2. [`velocity`]: fit a velocity field in the Dirichlet eigenbasis of the
//!    unit disk ([`eigenbasis`]), pushed to the physical domain through the
//!    scaling transform of [`geometry`].
//! 3. [`wss`]: evaluate the wall shear stress from the radius and the
//!    reference-domain velocity gradient.
//!
//! [`phantom`] generates the synthetic voxel data used to validate every stage.
//!
//! The crate is `no_std` (with `alloc`). The `parallel` feature enables `std`
//! and spreads per-voxel work over a rayon pool; results are identical to the
//! serial path.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;

pub mod bessel;
pub mod eigenbasis;
mod error;
pub mod geo_ident;
pub mod geometry;
pub mod grid;
pub mod linalg;
mod math;
mod par;
pub mod phantom;
pub mod quadrature;
pub mod velocity;
pub mod wss;

pub use error::{Error, Result};
pub use geometry::{DiskTransform, GeometryBounds, RadiusFunction};
pub use grid::{GridGeometry, VoxelGrid};
pub use linalg::Mat2;
