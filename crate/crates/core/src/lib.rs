//! Locally c-optimal designs for accelerated degradation tests.
//!
//! The crate covers gamma-process and linear mixed-effects degradation
//! components, series systems built from them, the asymptotic variance of
//! the estimated failure-time quantile, design optimization, and a Monte
//! Carlo harness that checks the asymptotics against simulated fits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod failure_time;
pub mod gamma_model;
pub mod lmem_model;
pub mod mc;
pub mod optimizer;
pub mod par;
mod roots;
pub mod specfun;

pub use design::{avar, efficiency, Criterion, Design};
pub use error::{Error, Result};
pub use failure_time::{Components, Family, Scenario};
pub use gamma_model::{GammaComponentParams, MeasurementSchedule};
pub use lmem_model::LmemComponentParams;
pub use optimizer::{multiplicative_optimize, OptimizerOptions, OptimizerResult};
pub use par::Execution;
