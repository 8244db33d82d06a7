#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod blocks;
pub mod chain;
pub mod cli;
pub mod constants;
pub mod continuum;
pub mod decoherence;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod rng;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
