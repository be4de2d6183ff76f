//! Gridded climatological statistics for scattered ocean measurements:
//! two-scale variance decomposition, spatio-temporal covariance estimation
//! with positive-definite conditioning, distance-structure diagnostics,
//! distribution tests, and gap interpolation.

pub mod config;
pub mod covariance;
pub mod distance;
pub mod distributions;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod interpolate;
pub mod twoscale;

pub use error::{Error, Result};
