//! Waveguide-mediated remote charging of a bosonic quantum battery.
//!
//! Network composition ([`slh`], [`configs`]), moment dynamics and closed
//! forms ([`dynamics`]), battery metrics ([`metrics`]) and a truncated-Fock
//! Lindblad integrator used as an independent check ([`oracle`]).

pub mod configs;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod slh;

pub use error::{Error, Result};
