#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod noise;
pub mod rate;
pub mod specfun;

pub use alloc::{AllocationResult, Objective, QosMetric, QosSpec};
pub use channel::{LedGeometry, MobilityModel};
pub use error::{Error, Result};
pub use noise::NoiseParams;
pub use rate::{PowerVector, RateMethod, RateReport};
