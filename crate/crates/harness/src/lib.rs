//! Restoration harness: image files, degradation, quality metrics,
//! self-ensemble inference, the overfit demo and the verification suites
//! behind the `cat` command.

pub mod checks;
pub mod ensemble;
mod error;
pub mod image;
pub mod metrics;
pub mod resize;
pub mod selftest;
pub mod train;

pub use error::{HarnessError, Result};
