//! Channel shortening detectors and achievable-rate tooling for channels with
//! intersymbol and interchannel interference.
//!
//! The crate is organised bottom-up: [`dsp`] holds primitives, [`obs`] the
//! observation models, [`detector`] the trellis detector, [`shortening`] the
//! reduced-memory receiver designs, [`txfilter`] transmit spectrum design,
//! [`air`] rate estimation, [`packing`] time/frequency packing search and
//! [`satchan`] the nonlinear satellite channel.

pub mod air;
pub mod cli;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod obs;
pub mod optim;
pub mod packing;
pub mod satchan;
pub mod shortening;
pub mod txfilter;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Converts a ratio in dB to linear scale.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
