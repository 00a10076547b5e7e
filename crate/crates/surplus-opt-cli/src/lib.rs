//! Library surface of the experiment runner: config parsing and validation,
//! mode dispatch, and artifact emission. The `surplus-opt` binary is a thin
//! clap wrapper over [`config::parse_config`] and [`runner::execute`].

// Validation deliberately writes `!(x > 0)` instead of `x <= 0`: the former
// also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod runner;
