//! Desk-scale simulator for pulsed nanowire quantum-dot single-photon sources.
//!
//! The pipeline runs emitter kinetics ([`emitter`]) through a detection chain
//! ([`detection`]) and recovers g²(0) and lifetimes with the fitting routines in
//! [`analysis`]. Temperature dependence lives in [`temperature`], built on the
//! HE11 waveguide solver in [`waveguide`]. [`budget`] converts count rates to
//! collection efficiencies and [`experiment`] wires everything to configs.

pub mod analysis;
pub mod budget;
pub mod detection;
pub mod digest;
pub mod emitter;
mod numeric;
pub mod error;
pub mod experiment;
pub mod seeds;
pub mod temperature;
pub mod units;
pub mod waveguide;

pub use error::{Error, Result};
