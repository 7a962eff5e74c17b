//! Hierarchical depth normalization.
//!
//! Depth maps are compared only up to an unknown positive scale and shift.
//! Each pixel is normalized against the median and mean absolute deviation of
//! one or more *contexts* (sets of pixels), and the loss averages the
//! normalized residuals over every context a pixel belongs to. A single
//! global context gives the classic scale-and-shift invariant loss; spatial
//! grids and ground-truth depth bins at several sizes give the hierarchical
//! variants.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the command line
//! and report rendering live in the companion `hdn` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod contexts;
pub mod depth;
mod error;
pub mod gradcheck;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod normalization;

pub use contexts::{ContextHierarchy, ContextKind, LevelSpec, Partition};
pub use depth::{DepthMap, PixelIndex};
pub use error::{Error, Result};
pub use loss::{LossConfig, LossReport};
pub use metrics::EvalReport;
pub use normalization::ContextStats;
