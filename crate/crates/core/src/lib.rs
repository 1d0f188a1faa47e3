//! Stochastic trajectory prediction with a timewise variational recurrent
//! model, neighbor attention over social features, final position
//! clustering and the usual benchmark metrics.

pub mod data;
pub mod diff;
pub mod error;
pub mod fpc;
pub mod geom;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
