// `!(x >= 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod config;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod hdc;
pub mod inspect;
pub mod kernel;
pub mod memory;
pub mod perf;
pub mod reasoner;
pub mod report;
pub mod registry;
pub mod verify;
pub mod workload;

pub use error::{Error, Result};
