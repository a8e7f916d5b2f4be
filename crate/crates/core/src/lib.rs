//! Simulation and analysis of photon time-tag streams from a driven single
//! ion and from laser light, measured with a beam splitter and two
//! detectors.
//!
//! The crate builds the whole chain: photon sources, lossy detectors with
//! dead time, a bin-exact auto/cross correlator, and the estimators that
//! turn the two correlation functions into the field commutator ⟨[a, a†]⟩
//! and the detection efficiency.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlator;
pub mod detection;
pub mod error;
pub mod estimators;
pub mod pipeline;
pub mod rng;
pub mod selftest;
pub mod sources;
pub mod timetag;

pub use correlator::{
    auto_correlate, cross_correlate, CorrelationHistogram, CorrelationKind, Correlator,
};
pub use error::{Error, Result};
pub use timetag::{TimeTag, TimeTagStream};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
