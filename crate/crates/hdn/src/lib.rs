//! File formats, configuration files, report rendering and the command-line
//! front end around [`hdn_core`].
//!
//! Depth maps are stored as grayscale PFM (values) with an optional binary
//! PGM sidecar (validity mask), or as small CSV grids where `nan` marks an
//! invalid pixel.

pub mod config;
mod error;
pub mod io;
pub mod report;

pub use error::{Error, Result};
