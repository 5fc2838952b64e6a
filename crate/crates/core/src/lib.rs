//! Sensitivity analysis for parameterized algorithms whose output is a
//! collection of fibers (curved tubes).
//!
//! The pipeline samples the input parameter space with Latin hypercube star
//! centers plus one-at-a-time star branches, quantifies how outputs differ
//! (histogram distances per characteristic and overlap-based best-match
//! dissimilarity), and aggregates those differences into local, regional and
//! global sensitivities. Results are embedded with classical MDS and
//! summarized spatially as a voxel occupation-ratio volume.

pub mod embedding;
pub mod error;
pub mod geometry;
pub mod model;
pub mod dissimilarity;
pub mod numfmt;
pub mod sampling;
pub mod sensitivity;
pub mod spatial;
pub mod study;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Aabb, Vec3};
pub use model::{
    Characteristic, Characteristics, Fiber, FiberResult, ParameterDescriptor, ParameterVector,
};
