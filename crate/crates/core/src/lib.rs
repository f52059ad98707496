//! Spatial-temporal graph regularized tensor robust PCA for video
//! background subtraction.
//!
//! The crate provides the t-SVD tensor algebra ([`tensor`]), kNN graph
//! Laplacians over frames and pixel patches ([`graph`]), a batch ADMM
//! solver ([`batch`]), an online per-column solver ([`online`]), mask
//! extraction and scoring ([`segmentation`]), frame I/O and synthetic
//! sequences ([`ingest`]), and the `strpca` command line ([`cli`]).

pub mod batch;
pub mod cli;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod linsolve;
pub mod online;
pub mod segmentation;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Mode, Tensor3};
