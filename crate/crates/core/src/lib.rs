//! Joint control-stability and wireless-delay analysis for vehicular
//! platoons: delay thresholds, SINR statistics from stochastic geometry,
//! tandem-queue delay, reliability bounds, gain optimization and the
//! simulators used to check them.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;

pub mod delay;
pub mod error;
pub mod model;
pub mod optimize;
pub mod quad;
pub mod reliability;
pub mod sim;
pub mod sinr;
pub mod stability;

pub use error::{Error, GainCondition, Result};
