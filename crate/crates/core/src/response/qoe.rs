use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ResponseError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QoEParams {
    pub priority_weights: BTreeMap<u8, f64>,
    /// Satisfaction exponent.
    pub kappa: f64,
    /// Discount per unit of mean behavior score.
    pub beta: f64,
    /// Discount per unit of group alarm fraction.
    pub gamma: f64,
    /// Weight of the utilization term in the reward.
    pub utilization_weight: f64,
}

impl Default for QoEParams {
    fn default() -> Self {
        Self {
            priority_weights: BTreeMap::from([(1, 8.0), (2, 4.0), (3, 2.0), (4, 1.0)]),
            kappa: 0.7,
            beta: 0.5,
            gamma: 0.25,
            utilization_weight: 1.0,
        }
    }
}

impl QoEParams {
    pub fn validate(&self) -> Result<(), ResponseError> {
        let bad = |m: &str| Err(ResponseError::InvalidParams(m.to_owned()));
        if self.priority_weights.is_empty() {
            return bad("priority_weights is empty");
        }
        let w: Vec<f64> = self.priority_weights.values().copied().collect();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.windows(2).any(|p| p[1] >= p[0]) {
            return bad("priority weights must be finite and strictly decreasing in priority number");
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.gamma) {
            return bad("beta and gamma must lie in [0, 1]");
        }
        if !self.utilization_weight.is_finite() {
            return bad("utilization_weight must be finite");
        }
        Ok(())
    }

    /// Weight of a priority; unknown priorities take the lowest weight.
    pub fn weight(&self, priority: u8) -> f64 {
        self.priority_weights
            .get(&priority)
            .copied()
            .unwrap_or_else(|| self.priority_weights.values().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn max_weight(&self) -> f64 {
        self.priority_weights.values().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemState {
    pub name: String,
    pub priority: u8,
    pub demand: f64,
    pub predicted_usage: f64,
    pub mean_behavior: f64,
    pub alarm_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub tick: u64,
    pub capacity: f64,
    pub subsystems: Vec<SubsystemState>,
}

impl AllocationState {
    pub fn new(tick: u64, capacity: f64, subsystems: Vec<SubsystemState>) -> Result<Self, ResponseError> {
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(ResponseError::InvalidParams(format!("capacity must be positive, got {capacity}")));
        }
        if subsystems.iter().any(|s| !(s.demand >= 0.0) || !(s.predicted_usage >= 0.0)) {
            return Err(ResponseError::NegativeInput);
        }
        Ok(Self { tick, capacity, subsystems })
    }

    pub fn total_demand(&self) -> f64 {
        self.subsystems.iter().map(|s| s.demand).sum()
    }
}

pub fn qoe_score(sub: &SubsystemState, a: f64, params: &QoEParams) -> Result<f64, ResponseError> {
    if !(a >= 0.0) || !(sub.demand >= 0.0) {
        return Err(ResponseError::NegativeInput);
    }
    let satisfaction = if sub.demand == 0.0 { 1.0 } else { (a / sub.demand).min(1.0).powf(params.kappa) };
    let behavior = 1.0 - params.beta * sub.mean_behavior.clamp(0.0, 1.0);
    let group = 1.0 - params.gamma * sub.alarm_fraction.clamp(0.0, 1.0);
    Ok(params.weight(sub.priority) * satisfaction * behavior * group)
}

/// Sum of QoE plus the weighted utilization of capacity.
pub fn reward_of(allocations: &[f64], state: &AllocationState, params: &QoEParams) -> Result<f64, ResponseError> {
    let mut total = 0.0;
    for (s, a) in state.subsystems.iter().zip(allocations) {
        total += qoe_score(s, *a, params)?;
    }
    let used: f64 = allocations.iter().sum();
    Ok(total + params.utilization_weight * used / state.capacity)
}
