//! Library side of the `entclust` command: configuration, stage functions,
//! the cached end-to-end pipeline and error classification.

pub mod cache;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod stages;
