//! Modelling and trace analysis for impedance-transformed Josephson
//! parametric amplifiers.

// `!(x > 0.0)` style guards are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod constants;
pub mod error;
pub mod fit;
pub mod network;
pub mod noise;
pub mod paramp;
pub mod readout;
pub mod roots;
pub mod squid;
pub mod trace;

pub use error::{Error, Result};
