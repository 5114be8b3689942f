//! Raster plumbing for sketch-driven terrain generation.
//!
//! [`dem`] holds the elevation grid type with its file formats, tiling,
//! normalization, error metric and hillshade renderer. [`sketch`] turns a
//! normalized elevation patch into a three-channel topographic map
//! (red ridges, green level sets, blue valleys). [`dataset`] ties both
//! together into a seeded train/test corpus on disk.

pub mod dataset;
pub mod dem;
mod error;
pub mod exec;
pub mod sketch;
pub mod synth;

pub use error::{CoreError, Result};
pub use exec::Execution;
