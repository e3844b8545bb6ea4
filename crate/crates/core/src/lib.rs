//! Simulation and analysis toolkit for continuous-variable
//! measurement-device-independent QKD.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod channel;
pub mod dsp;
pub mod gaussian;
pub mod harness;
pub mod postprocess;
pub mod rng;

pub use error::{Error, Result};
