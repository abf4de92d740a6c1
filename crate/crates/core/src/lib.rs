//! Fixed-budget multi-objective pure-exploration bandits.

pub mod algorithms;
pub mod allocate;
pub mod env;
pub mod error;
pub mod estimate;
pub mod features;
pub mod gaps;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type InstanceF64 = model::Instance<f64>;
pub type InstanceF32 = model::Instance<f32>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type RewardVectorF64 = model::RewardVector<f64>;
pub type RewardVectorF32 = model::RewardVector<f32>;
pub type GapReportF64 = gaps::GapReport<f64>;
pub type GapReportF32 = gaps::GapReport<f32>;
