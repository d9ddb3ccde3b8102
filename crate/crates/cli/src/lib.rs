//! Library half of the `platoon` binary, split out so integration tests
//! can reach the scenario parser and table code directly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod scenario;
pub mod table;
pub mod units;
