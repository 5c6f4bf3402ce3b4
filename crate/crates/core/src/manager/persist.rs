//! State directory layout:
//!
//! ```text
//! config.json            validated configuration
//! engine.json            fleet, score window, OL-ARIMA states, policy, forecasters
//! models/<type>__<level>.orca
//! scores.log insights.log maintenance.log allocation.log cycles.log
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::OrcaConfig;
use super::engine::Engine;
use super::ManagerError;
use crate::fleet::Fleet;
use crate::models::{load_model, save_model};
use crate::response::{OlArimaState, PolicyState};
use crate::synth::{InsightHistory, ScoreRecord, UsageForecaster};
use crate::telemetry::BehaviorLevel;

pub const STATE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format_version: u32,
    seed: u64,
    capacity: f64,
    fleet: Fleet,
    score_window: Vec<ScoreRecord>,
    ol_states: Vec<OlArimaState>,
    policy: PolicyState,
    forecasters: BTreeMap<String, UsageForecaster>,
    insight_history: InsightHistory,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn model_file(device_type: &str, level: BehaviorLevel) -> String {
    format!("{device_type}__{level}.orca")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ManagerError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes config, trained models and engine state. Logs already live in
/// the directory when it is the engine's log directory.
pub fn save_state(engine: &Engine, dir: &Path) -> Result<(), ManagerError> {
    fs::create_dir_all(dir.join("models"))?;
    write_atomic(&dir.join("config.json"), engine.config.to_json().as_bytes())?;
    for ((t, l), e) in &engine.registry.entries {
        if let Some(m) = &e.model {
            save_model(m, &dir.join("models").join(model_file(t, *l)))?;
        }
    }
    let snap = Snapshot {
        format_version: STATE_VERSION,
        seed: engine.seed,
        capacity: engine.capacity,
        fleet: engine.fleet.clone(),
        score_window: engine.score_window.iter().cloned().collect(),
        ol_states: engine.ol_states.values().cloned().collect(),
        policy: engine.policy.clone(),
        forecasters: engine.forecasters.clone(),
        insight_history: engine.insight_history.clone(),
    };
    let json = serde_json::to_vec(&snap).map_err(|e| ManagerError::CorruptState(e.to_string()))?;
    write_atomic(&dir.join("engine.json"), &json)
}

/// Restores an engine saved by [`save_state`] and points its logs at `dir`.
pub fn load_state(dir: &Path) -> Result<Engine, ManagerError> {
    let config = OrcaConfig::load(&dir.join("config.json"))?;
    let text = fs::read(dir.join("engine.json"))?;
    let probe: VersionProbe =
        serde_json::from_slice(&text).map_err(|e| ManagerError::CorruptState(format!("engine.json: {e}")))?;
    if probe.format_version != STATE_VERSION {
        return Err(ManagerError::StateVersion { found: probe.format_version, expected: STATE_VERSION });
    }
    let snap: Snapshot =
        serde_json::from_slice(&text).map_err(|e| ManagerError::CorruptState(format!("engine.json: {e}")))?;
    let mut engine = Engine::new(config, Some(snap.seed))?;
    if snap.fleet.config != engine.config.fleet || snap.fleet.devices.len() != engine.fleet.devices.len() {
        return Err(ManagerError::CorruptState("saved fleet does not match config.json".into()));
    }
    if snap.policy.subsystems != engine.subsystems().len() {
        return Err(ManagerError::CorruptState("saved policy does not match the subsystem count".into()));
    }
    engine.capacity = snap.capacity;
    engine.fleet = snap.fleet;
    engine.score_window = snap.score_window.into();
    engine.ol_states = snap.ol_states.into_iter().map(|s| ((s.device_id.clone(), s.level), s)).collect();
    engine.policy = snap.policy;
    engine.forecasters = snap.forecasters;
    engine.insight_history = snap.insight_history;
    for ((t, l), e) in engine.registry.entries.iter_mut() {
        let path = dir.join("models").join(model_file(t, *l));
        if !path.exists() {
            continue;
        }
        let m = load_model(&path)?;
        if m.schema().canonical() != e.schema.canonical() || m.spec().family() != e.spec.family() {
            return Err(ManagerError::CorruptState(format!("{} does not match its registry entry", path.display())));
        }
        e.spec = m.spec().clone();
        e.model = Some(m);
    }
    engine.set_log_dir(dir);
    Ok(engine)
}
