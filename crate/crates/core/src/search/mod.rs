//! Budgeted pipeline search and its bookkeeping.

pub mod acquisition;
pub mod history;
pub mod hyperband;
pub mod metrics;
pub mod proposer;
pub mod regret;
pub mod runner;
pub mod surrogate;

pub use acquisition::expected_improvement;
pub use history::{RunHistory, TrialRecord, TrialStatus};
pub use hyperband::{hyperband_schedule, s_max, Rung};
pub use metrics::rmse;
pub use proposer::{Proposer, ProposerSettings};
pub use regret::{compute_regret, write_regret_csv};
pub use runner::{run_search, run_search_with, FaultPlan, SearchBudget, SearchOptions, SearchOutcome};
pub use surrogate::{fit_surrogate, Surrogate, MIN_SURROGATE_POINTS};
