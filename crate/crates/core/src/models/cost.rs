use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{store, ModelError, TrainedModel};
use crate::telemetry::Dataset;

const MIN_CALLS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    /// Bytes of the model-store encoding.
    pub serialized_size: usize,
    /// Median wall time of one scoring call.
    pub score_latency: Duration,
    /// Parameters plus the largest activation footprint of one forward pass,
    /// in bytes.
    pub peak_working_set: usize,
}

pub fn cost_profile(model: &TrainedModel, probe: &Dataset) -> Result<CostProfile, ModelError> {
    if probe.schema.canonical() != model.schema().canonical() {
        return Err(ModelError::SchemaMismatch("probe schema differs from the model's".into()));
    }
    if probe.is_empty() {
        return Err(ModelError::InsufficientData { have: 0, need: 1 });
    }
    let calls = MIN_CALLS.max(probe.len());
    let mut times = Vec::with_capacity(calls);
    for k in 0..calls {
        let sample = &probe.samples[k % probe.len()];
        let t = Instant::now();
        black_box(model.score(black_box(sample))?);
        times.push(t.elapsed());
    }
    times.sort();
    let params = model.parameters().len();
    Ok(CostProfile {
        serialized_size: store::encode_model(model).len(),
        score_latency: times[times.len() / 2],
        peak_working_set: 8 * (params + model.working_floats()),
    })
}
