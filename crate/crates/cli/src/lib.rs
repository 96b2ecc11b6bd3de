//! Command-line pipeline and experiment server.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod commands;
pub mod config;
pub mod server;
