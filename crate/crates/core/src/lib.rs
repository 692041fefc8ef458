//! Deterministic simulator for low-power fine-grained mesh-connected
//! computers.
//!
//! An n×n grid of processors holds one image pixel each. Algorithms keep only
//! a few processors active at a time; activity is modeled by squirrels that
//! walk the mesh carrying bounded payloads. The engine charges exact unit
//! costs per action, tracks per-cell energy and an activity trace, and runs
//! embedded standard-mesh subroutines as charged black boxes, so peak power,
//! total energy, and per-cell energy of every algorithm are measurable and
//! reproducible.

pub mod closest;
pub mod engine;
pub mod error;
pub mod exact;
pub mod figures;
pub mod geometry;
pub mod image;
pub mod labeling;
pub mod metrics;
pub mod oracle;
pub mod programs;
pub mod records;
pub mod variants;

pub use error::{MeshError, Result};
