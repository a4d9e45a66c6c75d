//! Behavioural demand-response simulation and community battery scheduling.
//!
//! The crate is `no_std` (with `alloc`) and contains only the numerical
//! machinery: a convex QP / MIQP solver, the end-user utility model with
//! loss aversion and hyperbolic discounting, the MSTL-based randomness
//! pipeline, non-stationary Gaussian processes, deterministic and
//! chance-constrained battery scheduling, the receding-horizon simulator and
//! the economics post-processing. File formats and the command line live in
//! the `commbatt` crate.
#![no_std]

extern crate alloc;

pub mod cbs;
pub mod economics;
pub mod enduser;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod normal;
pub mod qp;
pub mod randomness;
pub mod simulator;
pub mod synthetic;
pub mod time;

pub use error::{Error, Result};
pub use time::{BatterySpec, HorizonConfig, TariffBook};
