#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

//! Particle flow particle filters and the baselines they are compared against.
//!
//! The crate is organised in four layers:
//!
//! * [`ssm`]: state-space models and the three benchmark scenario families.
//! * [`flow`]: exact Daum-Huang flows (shared and per-particle), the pseudo-time
//!   schedule and the invertibility guard.
//! * [`filters`]: PF-PF (EDH/LEDH), flow-only EDH/LEDH, the bootstrap filter and
//!   EKF/UKF recursions.
//! * [`eval`]: error metrics, scenario presets and the multi-trial runner.

pub mod error;
pub mod eval;
pub mod filters;
pub mod flow;
pub mod linalg;
pub mod special;
pub mod ssm;

pub use error::{Error, Result};
