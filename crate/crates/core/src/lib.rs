//! Simulation and analysis of Franson time-bin interference from an emitter
//! whose every time bin is a vacuum / one-photon superposition.
//!
//! Exact rates come from Fock-space evolution through linear-optical
//! networks; time tags come from sequential Monte-Carlo sampling of the same
//! model and run through the same correlator as measured data.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
pub mod analytics;
pub mod correlator;
pub mod error;
pub mod fock;
pub mod interferometer;
pub mod montecarlo;
pub mod pipeline;
pub mod source;
pub mod tags;

pub use error::{Error, Result};
