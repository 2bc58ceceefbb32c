pub mod arm_space;
pub mod bandit;
pub mod benchmarks;
pub mod engine;
pub mod error;
pub mod normal;
pub mod portfolio;
pub mod probit;
pub mod study;
pub mod truth;

pub use error::{Error, Result};
