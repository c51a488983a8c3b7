//! Middleware-free RatSLAM: a pose-cell attractor network, local view
//! templates and a relaxed experience graph, run offline over dataset
//! directories.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod experience_map;
pub mod geometry;
pub mod ingest;
pub mod local_view;
pub mod pipeline;
pub mod pose_cells;
pub mod synth_world;

pub use error::{Error, Result};
