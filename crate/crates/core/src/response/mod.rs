//! Management responses: predictive maintenance from online score forecasts
//! and QoE-driven edge resource allocation.

mod allocator;
mod maintenance;
mod olarima;
mod qoe;

use thiserror::Error;

pub use allocator::{
    brute_force_optimum, compute_reward, context_of, format_audit, learn_step, propose_allocation, propose_with_noise,
    softmax, water_fill, AllocationDecision, PolicyParams, PolicyState,
};
pub use maintenance::{
    build_maintenance_list, format_maintenance, MaintenanceItem, MaintenanceList, MaintenanceReason,
    DEFAULT_MAINTENANCE_WINDOW,
};
pub use olarima::{BehaviorForecast, OlArimaState, INITIAL_COVARIANCE, RECENT_DEPTH, WARM_UP_MARGIN};
pub use qoe::{qoe_score, reward_of, AllocationState, QoEParams, SubsystemState};

#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("forecast requested after {have} updates, {need} needed")]
    NotWarmedUp { have: usize, need: usize },
    #[error("negative or non-finite allocation or demand")]
    NegativeInput,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
