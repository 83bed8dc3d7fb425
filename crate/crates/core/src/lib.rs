//! Distribution-aware regression losses on a small reverse-mode autodiff tape.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
