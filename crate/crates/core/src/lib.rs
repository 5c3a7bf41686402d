//! Label pre-computation for heterogeneous graphs without training label
//! leakage.
//!
//! Multi-hop label propagation lets a training node's own label walk back to
//! itself (the echo effect). The echoless strategy partitions target nodes,
//! masks the current partition's labels before propagating, rescales rows by
//! the retained label mass, and merges per-partition outputs. Plain,
//! hop-dropping and diagonal-removal baselines are provided for comparison.

pub mod bench;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod labels;
pub mod matrix;
pub mod precompute;
pub mod propagation;
pub mod verify;

pub use error::{Error, Result};
