//! Patch-level point cloud analytics.
//!
//! The crate works on *patches*: groups of points that share one cell of an
//! axis-aligned grid. For each patch it computes
//!
//! - [`octree`]: the per-level octree cell occupancy vector (`ppl`) from Morton
//!   codes, and the MidOc level-of-detail ordering,
//! - [`dim`]: a scalar geometric dimensionality from `ppl` (RANSAC and robust
//!   median fusion), the structure-tensor baseline and their agreement,
//! - [`features`]: the feature vector fed to the classifier,
//! - [`forest`]: a weighted random forest with K-fold evaluation,
//! - [`analysis`]: confusion-matrix spectral layout and precision/recall boosting.
//!
//! [`store`] holds the in-memory patch partitioning, [`synth`] the synthetic
//! scene generator and brute-force oracles used by the tests.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the `pcdim` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod dim;
mod eigen;
mod error;
pub mod features;
pub mod forest;
pub mod geom;
pub mod octree;
pub mod rng;
pub mod stats;
pub mod store;
pub mod synth;

pub use crate::{
    eigen::{symmetric_eigen, SymmetricEigen},
    error::{Error, Result},
    geom::{Aabb, Cube, Vec3},
    store::{
        AttrStats, Attribute, GridMode, GridSpec, Patch, PatchId, PatchStats, PatchStore, Point,
        Schema,
    },
};

/// Class identifier carried by labelled points and predicted by the classifier.
pub type ClassId = u32;
