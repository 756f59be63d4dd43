//! Convolutive mixture models for hospital length of stay.
//!
//! A stay is short with probability `1 - pi` and then log-normal, or long with
//! probability `pi` and then the sum `K + E` of an integer discharge lag `K`
//! and a continuous recovery period `E`. The crate provides the densities,
//! covariate links, three estimators, simulation and goodness-of-fit tools.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convolution;
pub mod covariates;
pub mod data_io;
pub mod dist;
pub mod estimation;
pub mod error;
pub mod gof;
pub mod math;
pub mod mixture;
pub mod optim;

pub use error::{LosError, Result};
