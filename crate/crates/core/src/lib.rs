//! Adaptive low-light raw enhancement.
//!
//! A two-stage pipeline over mosaicked sensor captures: an exposure-shifting
//! U-Net ([`esn`]) renders a raw frame as it would look at a chosen exposure
//! time, and a brightness-prediction network ([`bpn`]) picks that time from
//! the frame and its capture metadata. Everything runs on the small reverse-mode
//! engine in [`autodiff`]; [`synthcam`] generates multi-exposure training data.

pub mod autodiff;
pub mod bpn;
pub mod conditioning;
pub mod error;
pub mod esn;
pub mod harness;
pub mod metrics;
mod nn;
pub mod rawproc;
pub mod synthcam;

pub use error::{Error, Result};
