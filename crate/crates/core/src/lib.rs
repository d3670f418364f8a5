//! Automated search over remaining-useful-life regression pipelines.
//!
//! Run-to-failure series are cleaned, cut into windows, turned into features
//! and regressed onto the remaining useful life. The search explores a
//! conditional space of such pipelines with model-based proposals and
//! Hyperband budgets, and the best models can be combined greedily.

pub mod configspace;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod preprocessing;
pub mod regressors;
pub mod report;
pub mod search;
pub mod util;

pub use error::{Error, Result};
