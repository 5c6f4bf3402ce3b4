//! Two-stage online allocator: a policy network proposes simplex shares of
//! the edge capacity, which are clipped to demand and water-filled; realized
//! reward then refines the policy with a score-function update.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::qoe::{reward_of, AllocationState, QoEParams};
use super::ResponseError;
use crate::models::nn::{Act, Mlp};
use crate::rng;

const TAG: u64 = 0x0061_6c6c_6f63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub hidden: usize,
    pub lr: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// Standard deviation of the logit perturbation when exploring.
    pub noise_std: f64,
    pub baseline_decay: f64,
    pub clip_norm: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            hidden: 16,
            lr: 0.05,
            epsilon: 0.3,
            epsilon_decay: 0.999,
            epsilon_floor: 0.02,
            noise_std: 0.5,
            baseline_decay: 0.95,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub settings: PolicyParams,
    pub subsystems: usize,
    net: Mlp,
    params: Vec<f64>,
    pub epsilon: f64,
    pub baseline: Option<f64>,
    pub seed: u64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub tick: u64,
    pub allocations: Vec<f64>,
    /// Allocation the unperturbed policy would make.
    pub stage1_proposal: Vec<f64>,
    /// `allocations - stage1_proposal`.
    pub stage2_adjustment: Vec<f64>,
    pub shares: Vec<f64>,
    pub context: Vec<f64>,
    /// Logit perturbation applied when exploring.
    pub noise: Option<Vec<f64>>,
}

pub fn context_len(subsystems: usize) -> usize {
    4 * subsystems + 1
}

pub fn context_of(state: &AllocationState) -> Vec<f64> {
    let total = state.total_demand();
    let mut c = Vec::with_capacity(context_len(state.subsystems.len()));
    for s in &state.subsystems {
        c.push(if total > 0.0 { s.demand / total } else { 0.0 });
        c.push((s.predicted_usage / state.capacity).min(10.0));
        c.push(s.mean_behavior.clamp(0.0, 1.0));
        c.push(s.alarm_fraction.clamp(0.0, 1.0));
    }
    c.push(state.capacity / (state.capacity + total));
    c
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    if !s.is_finite() || s <= 0.0 || e.iter().any(|v| !v.is_finite()) {
        return vec![1.0 / z.len() as f64; z.len()];
    }
    e.into_iter().map(|v| v / s).collect()
}

/// Splits `capacity` by `shares`, clipping at demand and handing the surplus
/// to the unclipped subsystems until nothing more clips.
pub fn water_fill(shares: &[f64], demands: &[f64], capacity: f64) -> Vec<f64> {
    let n = demands.len();
    let mut a = vec![0.0; n];
    let mut active: Vec<usize> = (0..n).filter(|&s| demands[s] > 0.0).collect();
    let mut rem = capacity.max(0.0);
    let weight = |s: usize| if shares[s].is_finite() && shares[s] > 0.0 { shares[s] } else { 0.0 };
    while !active.is_empty() && rem > 0.0 {
        let total: f64 = active.iter().map(|&s| weight(s)).sum();
        let part = |s: usize| if total > 0.0 { rem * weight(s) / total } else { rem / active.len() as f64 };
        let clipped: Vec<usize> = active.iter().copied().filter(|&s| part(s) >= demands[s]).collect();
        if clipped.is_empty() {
            for &s in &active {
                a[s] = part(s);
            }
            break;
        }
        for &s in &clipped {
            a[s] = demands[s];
            rem -= demands[s];
        }
        active.retain(|s| !clipped.contains(s));
    }
    // rounding can leave the sum a few ulps over capacity
    for _ in 0..8 {
        let excess = a.iter().sum::<f64>() - capacity;
        if excess <= 0.0 {
            break;
        }
        let big = (0..n).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
        a[big] = (a[big] - excess.max(a[big] * f64::EPSILON)).max(0.0);
    }
    a
}

impl PolicyState {
    pub fn new(subsystems: usize, settings: PolicyParams, seed: u64) -> Self {
        let net = Mlp::new(vec![context_len(subsystems), settings.hidden, subsystems], vec![Act::Tanh, Act::Identity]);
        let mut params = net.init(&mut rng::stream(&[seed, TAG, 0]));
        // start from near-uniform shares
        let out = settings.hidden * subsystems;
        let off = net.param_count() - out - subsystems;
        params[off..off + out].iter_mut().for_each(|w| *w *= 0.1);
        Self { epsilon: settings.epsilon, settings, subsystems, net, params, baseline: None, seed, steps: 0 }
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn shares(&self, context: &[f64]) -> Vec<f64> {
        softmax(&self.net.predict(&self.params, context))
    }

    fn check(&self, state: &AllocationState) -> Result<(), ResponseError> {
        if state.subsystems.len() != self.subsystems {
            return Err(ResponseError::InvalidParams(format!(
                "policy sized for {} subsystems, state has {}",
                self.subsystems,
                state.subsystems.len()
            )));
        }
        Ok(())
    }
}

/// Stage 1. Explores with probability epsilon, drawing the perturbation from
/// a stream keyed by the policy's step count.
pub fn propose_allocation(state: &AllocationState, policy: &PolicyState) -> Result<AllocationDecision, ResponseError> {
    let mut r = rng::stream(&[policy.seed, TAG, 1, policy.steps]);
    let noise = (r.random::<f64>() < policy.epsilon).then(|| {
        (0..policy.subsystems)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut r);
                e * policy.settings.noise_std
            })
            .collect::<Vec<f64>>()
    });
    propose_with_noise(state, policy, noise)
}

/// Stage 1 with an explicit logit perturbation.
pub fn propose_with_noise(
    state: &AllocationState,
    policy: &PolicyState,
    noise: Option<Vec<f64>>,
) -> Result<AllocationDecision, ResponseError> {
    policy.check(state)?;
    if noise.as_ref().is_some_and(|n| n.len() != policy.subsystems) {
        return Err(ResponseError::InvalidParams("noise length differs from subsystem count".into()));
    }
    let context = context_of(state);
    let logits = policy.net.predict(&policy.params, &context);
    let demands: Vec<f64> = state.subsystems.iter().map(|s| s.demand).collect();
    let stage1_proposal = water_fill(&softmax(&logits), &demands, state.capacity);
    let shares = match &noise {
        Some(n) => softmax(&logits.iter().zip(n).map(|(l, e)| l + e).collect::<Vec<_>>()),
        None => softmax(&logits),
    };
    let allocations = water_fill(&shares, &demands, state.capacity);
    let stage2_adjustment = allocations.iter().zip(&stage1_proposal).map(|(a, p)| a - p).collect();
    Ok(AllocationDecision { tick: state.tick, allocations, stage1_proposal, stage2_adjustment, shares, context, noise })
}

pub fn compute_reward(
    decision: &AllocationDecision,
    state: &AllocationState,
    params: &QoEParams,
) -> Result<f64, ResponseError> {
    reward_of(&decision.allocations, state, params)
}

/// Stage 2. Moves the policy mean toward (or away from) the explored
/// perturbation in proportion to the advantage over the running baseline.
pub fn learn_step(policy: &mut PolicyState, decision: &AllocationDecision, reward: f64) -> Result<(), ResponseError> {
    if !reward.is_finite() {
        return Err(ResponseError::InvalidParams(format!("non-finite reward {reward}")));
    }
    let advantage = policy.baseline.map_or(0.0, |b| reward - b);
    if let Some(noise) = &decision.noise {
        if advantage != 0.0 {
            let s2 = policy.settings.noise_std * policy.settings.noise_std;
            let d_out: Vec<f64> = noise.iter().map(|e| -advantage * e / s2).collect();
            let outs = policy.net.forward(&policy.params, &decision.context);
            let mut grad = vec![0.0; policy.params.len()];
            policy.net.backward(&policy.params, &outs, &d_out, &mut grad);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let clip = policy.settings.clip_norm;
            let scale = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 };
            for (p, g) in policy.params.iter_mut().zip(&grad) {
                *p -= policy.settings.lr * scale * g;
            }
        }
    }
    let k = policy.settings.baseline_decay;
    policy.baseline = Some(policy.baseline.map_or(reward, |b| k * b + (1.0 - k) * reward));
    policy.epsilon = (policy.epsilon * policy.settings.epsilon_decay).max(policy.settings.epsilon_floor);
    policy.steps += 1;
    Ok(())
}

/// Best allocation over share vectors on a simplex grid of the given step.
pub fn brute_force_optimum(
    state: &AllocationState,
    params: &QoEParams,
    step: f64,
) -> Result<(Vec<f64>, f64), ResponseError> {
    let n = state.subsystems.len();
    let units = (1.0 / step).round() as usize;
    let demands: Vec<f64> = state.subsystems.iter().map(|s| s.demand).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut counts = vec![0usize; n];
    fn visit(
        i: usize,
        left: usize,
        counts: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> Result<(), ResponseError>,
    ) -> Result<(), ResponseError> {
        if i + 1 == counts.len() {
            counts[i] = left;
            return f(counts);
        }
        for c in 0..=left {
            counts[i] = c;
            visit(i + 1, left - c, counts, f)?;
        }
        Ok(())
    }
    if n == 0 {
        return Ok((Vec::new(), reward_of(&[], state, params)?));
    }
    visit(0, units, &mut counts, &mut |c| {
        let shares: Vec<f64> = c.iter().map(|&k| k as f64 / units as f64).collect();
        let a = water_fill(&shares, &demands, state.capacity);
        let r = reward_of(&a, state, params)?;
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((a, r));
        }
        Ok(())
    })?;
    Ok(best.unwrap())
}

/// `tick,subsystem,demand,proposal,final,reward`, one line per subsystem.
pub fn format_audit(decision: &AllocationDecision, state: &AllocationState, reward: f64) -> Vec<String> {
    state
        .subsystems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "{},{},{},{},{},{}",
                decision.tick, s.name, s.demand, decision.stage1_proposal[i], decision.allocations[i], reward
            )
        })
        .collect()
}
