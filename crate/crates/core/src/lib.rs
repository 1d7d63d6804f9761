//! Sum-of-squares relaxations for geometric queries on polynomial and
//! rational patches.

pub mod batch;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod patch;
pub mod poly;
pub mod relax;
pub mod spline;

pub use error::{Error, Result};
