//! Simulation and power allocation for target detection in OTFS-aided
//! cell-free MIMO integrated sensing and communication (ISAC) systems.
//!
//! The crate covers the full downlink chain: delay-Doppler transforms
//! ([`otfs`]), geometry and channels ([`channel`]), RZF and nullspace
//! precoding ([`precoding`]), the ISAC signal model ([`signal`]), the MAPRT
//! detector ([`detector`]), SOCP-based power allocation ([`optimizer`]) and
//! the Monte Carlo experiment harness ([`experiments`]).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detector;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod optimizer;
pub mod otfs;
pub mod precoding;
pub mod signal;

pub use error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
