//! Quasiparticle burst model and analysis chain for gap-engineered transmon
//! arrays: the coupled density/qubit ODE model, synthetic measurement
//! records, burst detection, rate inversion, Ramsey fits and the linac trace
//! pipeline.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod constants;
pub mod detection;
pub mod error;
pub mod inversion;
pub mod io;
pub mod lsq;
pub mod measurement;
pub mod ode;
pub mod pipeline;
pub mod plot;
pub mod qp;
pub mod quadrature;
pub mod ramsey;
pub mod rng;

pub use error::{Error, ErrorClass, Result};
