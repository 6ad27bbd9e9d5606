//! Phasor-domain simulation of rotary frequency converters (RFCs) feeding a
//! 16⅔ Hz single-phase railway grid from a stiff 50 Hz public grid.
//!
//! Each converter is a synchronous motor and a synchronous generator on one
//! shaft. Both machines use a sub-transient dq model; the generator has a
//! brushless exciter with reactive-power droop. The railway catenary is an
//! admittance network solved algebraically at every integration stage.
//!
//! Typical use:
//!
//! ```no_run
//! use rfcsim_core::{scenario, sim};
//! let case = scenario::case1(&scenario::CaseOptions::default()).unwrap();
//! let out = sim::run(&case).unwrap();
//! println!("{} samples", out.series.len());
//! ```

// `!(x > 0.0)` rejects NaN as well as non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exciter;
pub mod init;
pub mod machine;
pub mod network;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use scenario::Scenario;
pub use sim::{run, RunOutput, TimeSeries};
