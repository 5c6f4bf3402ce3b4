#![allow(dead_code)]

use orca_core::fleet::{ApplicationClass, BaselineConfig, DeviceTypeConfig, EmitConfig, FleetConfig};
use orca_core::manager::OrcaConfig;
use orca_core::BehaviorLevel;

pub fn emit(level: BehaviorLevel, dim: usize, seq_len: Option<usize>) -> EmitConfig {
    EmitConfig { level, dim, names: None, seq_len, baseline: BaselineConfig::default() }
}

pub fn device_type(class: &str, name: &str, count: usize, subsystem: &str, emits: Vec<EmitConfig>) -> DeviceTypeConfig {
    ApplicationClass::lookup(class).expect("known application class").device_type(name, count, subsystem, emits)
}

/// Cameras (vector + traffic sequence), thermostats (vector) and headsets
/// (wide vector + resource sequence), `per_type` devices each.
pub fn mixed_fleet(per_type: usize) -> FleetConfig {
    FleetConfig::new(vec![
        device_type(
            "face_detection",
            "camera",
            per_type,
            "security",
            vec![emit(BehaviorLevel::B1, 8, None), emit(BehaviorLevel::B2, 1, Some(90))],
        ),
        device_type("low_level_sensor", "thermo", per_type, "environment", vec![emit(BehaviorLevel::B1, 6, None)]),
        device_type(
            "vr_ar",
            "headset",
            per_type,
            "immersive",
            vec![emit(BehaviorLevel::B1, 32, None), emit(BehaviorLevel::B3, 1, Some(90))],
        ),
    ])
}

/// Three vector-only types of `per_type` devices.
pub fn vector_fleet(per_type: usize) -> FleetConfig {
    FleetConfig::new(vec![
        device_type("face_detection", "camera", per_type, "security", vec![emit(BehaviorLevel::B1, 8, None)]),
        device_type("low_level_sensor", "thermo", per_type, "environment", vec![emit(BehaviorLevel::B1, 6, None)]),
        device_type("smart_home", "plug", per_type, "home", vec![emit(BehaviorLevel::B1, 4, None)]),
    ])
}

/// Config with training sizes small enough for tests.
pub fn quick_config(fleet: FleetConfig, seed: u64) -> OrcaConfig {
    let mut cfg = OrcaConfig::new(fleet, seed);
    cfg.training.vector_samples = 1500;
    cfg.training.sequence_samples = 120;
    cfg
}
