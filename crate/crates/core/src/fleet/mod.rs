//! Deterministic heterogeneous device fleet with fault injection.

mod config;
mod generator;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    ApplicationClass, BaselineConfig, DeviceTypeConfig, EmitConfig, FleetConfig, Intensity, APPLICATION_CLASSES,
};
pub use generator::{Effect, Generator};

use crate::rng;
use crate::telemetry::{BehaviorLevel, DeviceId, FeatureSchema, Sample, SequenceSample, TelemetrySample};

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("bad fleet config: {0}")]
    BadConfig(String),
    #[error("tick {tick} does not follow previous tick {last}")]
    NonMonotonicTick { tick: u64, last: u64 },
    #[error("unknown device `{0}`")]
    UnknownDevice(DeviceId),
    #[error("bad injection: {0}")]
    BadInjection(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub type_name: String,
    pub priority: u8,
    pub compute_intensity: Intensity,
    pub data_intensity: Intensity,
    pub latency_sensitivity: Intensity,
    pub subsystem: String,
    pub base_demand: f64,
    pub emits: Vec<FeatureSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTags {
    pub subsystem: String,
    pub location: String,
    pub batch: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Normal,
    Degrading,
    Faulty,
    Botnet,
    Surge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    HardwareFault,
    TrafficAnomaly,
    ResourceSurge,
    DegradingDrift,
}

impl FaultKind {
    /// Behavior level whose telemetry the fault manifests in.
    pub fn level(self) -> BehaviorLevel {
        match self {
            Self::HardwareFault | Self::DegradingDrift => BehaviorLevel::B1,
            Self::TrafficAnomaly => BehaviorLevel::B2,
            Self::ResourceSurge => BehaviorLevel::B3,
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Self::HardwareFault => Regime::Faulty,
            Self::TrafficAnomaly => Regime::Botnet,
            Self::ResourceSurge => Regime::Surge,
            Self::DegradingDrift => Regime::Degrading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub at_tick: u64,
    pub device_ids: BTreeSet<DeviceId>,
    pub kind: FaultKind,
    pub magnitude: f64,
    /// Feature indices a drift applies to; all features when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveFault {
    pub kind: FaultKind,
    pub magnitude: f64,
    pub features: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    pub type_index: usize,
    pub type_name: String,
    pub group_tags: GroupTags,
    pub regime: Regime,
    pub regime_since: u64,
    pub fault: Option<ActiveFault>,
    phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDemand {
    pub tick: u64,
    pub subsystem: String,
    pub requested: f64,
    pub latency_class: Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub telemetry: Vec<Sample>,
    pub demands: Vec<ResourceDemand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub config: FleetConfig,
    pub seed: u64,
    pub profiles: Vec<DeviceProfile>,
    pub devices: Vec<Device>,
    generators: Vec<Vec<Generator>>,
    last_tick: Option<u64>,
    pub injections: Vec<FaultInjection>,
}

pub fn build_fleet(config: &FleetConfig, seed: u64) -> Result<Fleet, FleetError> {
    Fleet::build(config, seed)
}

impl Fleet {
    pub fn build(config: &FleetConfig, seed: u64) -> Result<Self, FleetError> {
        if config.total_devices() == 0 {
            return Err(FleetError::BadConfig("fleet has zero devices".into()));
        }
        if config.locations == 0 || config.batches == 0 {
            return Err(FleetError::BadConfig("locations and batches must be positive".into()));
        }
        if config.ts_cadence == 0 {
            return Err(FleetError::BadConfig("ts_cadence must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        let mut profiles = Vec::new();
        let mut generators = Vec::new();
        for t in &config.device_types {
            if !seen.insert(t.name.as_str()) {
                return Err(FleetError::BadConfig(format!("duplicate device type `{}`", t.name)));
            }
            if !(1..=4).contains(&t.priority) {
                return Err(FleetError::BadConfig(format!("type `{}`: priority must be 1..=4", t.name)));
            }
            if t.emits.is_empty() {
                return Err(FleetError::BadConfig(format!("type `{}` emits nothing", t.name)));
            }
            if !(t.base_demand >= 0.0) {
                return Err(FleetError::BadConfig(format!("type `{}`: negative base demand", t.name)));
            }
            let mut schemas = Vec::new();
            let mut gens = Vec::new();
            for (k, e) in t.emits.iter().enumerate() {
                let schema = e.schema().map_err(|err| FleetError::BadConfig(format!("type `{}`: {err}", t.name)))?;
                let key = rng::mix(&[rng::hash_str(&t.name), e.level.index() as u64, k as u64]);
                gens.push(Generator::build(&e.baseline, e.dim, e.seq_len, key));
                schemas.push(schema);
            }
            profiles.push(DeviceProfile {
                type_name: t.name.clone(),
                priority: t.priority,
                compute_intensity: t.compute_intensity,
                data_intensity: t.data_intensity,
                latency_sensitivity: t.latency_sensitivity,
                subsystem: t.subsystem.clone(),
                base_demand: t.base_demand,
                emits: schemas,
            });
            generators.push(gens);
        }

        let mut devices = Vec::with_capacity(config.total_devices());
        let mut global = 0usize;
        for (ti, t) in config.device_types.iter().enumerate() {
            for i in 0..t.count {
                let id = DeviceId::new(format!("{}-{:04}", t.name, i));
                let mut r = rng::stream(&[seed, rng::hash_str(id.as_str()), 0x70686173]);
                devices.push(Device {
                    id,
                    type_index: ti,
                    type_name: t.name.clone(),
                    group_tags: GroupTags {
                        subsystem: t.subsystem.clone(),
                        location: format!("loc-{}", global % config.locations),
                        batch: format!("batch-{}", i % config.batches),
                    },
                    regime: Regime::Normal,
                    regime_since: 0,
                    fault: None,
                    phase: r.random_range(0.0..1000.0),
                });
                global += 1;
            }
        }
        Ok(Self {
            config: config.clone(),
            seed,
            profiles,
            devices,
            generators,
            last_tick: None,
            injections: Vec::new(),
        })
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.last_tick
    }

    pub fn device(&self, id: &DeviceId) -> Option<&Device> {
        self.devices.iter().find(|d| &d.id == id)
    }

    pub fn profile_of(&self, device: &Device) -> &DeviceProfile {
        &self.profiles[device.type_index]
    }

    pub fn subsystems(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.profiles.iter().map(|p| p.subsystem.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Priority of a subsystem: the highest (numerically smallest) among its types.
    pub fn subsystem_priority(&self, subsystem: &str) -> u8 {
        self.profiles.iter().filter(|p| p.subsystem == subsystem).map(|p| p.priority).min().unwrap_or(4)
    }

    pub fn step(&mut self, tick: u64) -> Result<StepOutput, FleetError> {
        if let Some(last) = self.last_tick {
            if tick <= last {
                return Err(FleetError::NonMonotonicTick { tick, last });
            }
        }
        self.last_tick = Some(tick);
        let mut telemetry = Vec::new();
        for di in 0..self.devices.len() {
            let ti = self.devices[di].type_index;
            for (ei, schema) in self.profiles[ti].emits.iter().enumerate() {
                let due = !schema.time_series() || tick.is_multiple_of(self.config.ts_cadence);
                if due {
                    telemetry.push(self.emit(di, ei, tick, false));
                }
            }
        }
        let demands = self.demands(tick);
        Ok(StepOutput { telemetry, demands })
    }

    /// Sample emitted by device `device_index` for its `emit_index`-th target
    /// at `tick`, ignoring cadence. With `force_normal` the device's regime is
    /// ignored, which is how clean training data is produced.
    pub fn emit(&self, device_index: usize, emit_index: usize, tick: u64, force_normal: bool) -> Sample {
        let dev = &self.devices[device_index];
        let profile = &self.profiles[dev.type_index];
        let schema = &profile.emits[emit_index];
        let gen = &self.generators[dev.type_index][emit_index];
        let effect = if force_normal { Effect::none(schema.dim()) } else { self.effect(dev, emit_index, tick) };
        let mut r = rng::stream(&[self.seed, device_index as u64, tick, emit_index as u64]);
        match schema.seq_len() {
            None => Sample::Vector(TelemetrySample {
                tick,
                device_id: dev.id.clone(),
                level: schema.level(),
                values: gen.vector(&mut r, &effect),
            }),
            Some(len) => {
                let per_tick = (len as u64 / self.config.ts_cadence).max(1);
                Sample::Sequence(SequenceSample {
                    tick,
                    device_id: dev.id.clone(),
                    level: schema.level(),
                    seq_len: len,
                    dim: schema.dim(),
                    data: gen.sequence(&mut r, tick * per_tick, dev.phase, &effect),
                })
            }
        }
    }

    fn effect(&self, dev: &Device, emit_index: usize, tick: u64) -> Effect {
        let profile = &self.profiles[dev.type_index];
        let dim = profile.emits[emit_index].dim();
        let fault = match &dev.fault {
            Some(f) if dev.regime != Regime::Normal && tick >= dev.regime_since => f,
            _ => return Effect::none(dim),
        };
        let level = profile.emits[emit_index].level();
        let any_match = profile.emits.iter().any(|s| s.level() == fault.kind.level());
        if any_match && level != fault.kind.level() {
            return Effect::none(dim);
        }
        let m = fault.magnitude;
        match fault.kind {
            FaultKind::HardwareFault => Effect { shift: vec![m; dim], noise_mult: 1.0 + m, burst: 0.0 },
            FaultKind::TrafficAnomaly => Effect { shift: vec![0.0; dim], noise_mult: 1.0 + m, burst: m },
            FaultKind::ResourceSurge => Effect { shift: vec![m; dim], noise_mult: 1.0, burst: 0.0 },
            FaultKind::DegradingDrift => {
                let amount = m * (tick - dev.regime_since) as f64;
                let mut shift = vec![0.0; dim];
                match &fault.features {
                    Some(fs) => fs.iter().filter(|&&j| j < dim).for_each(|&j| shift[j] = amount),
                    None => shift.iter_mut().for_each(|s| *s = amount),
                }
                Effect { shift, noise_mult: 1.0, burst: 0.0 }
            }
        }
    }

    fn demands(&self, tick: u64) -> Vec<ResourceDemand> {
        let mut per: BTreeMap<&str, (f64, Intensity)> = BTreeMap::new();
        for dev in &self.devices {
            let p = &self.profiles[dev.type_index];
            let surge = match &dev.fault {
                Some(f)
                    if f.kind == FaultKind::ResourceSurge
                        && tick >= dev.regime_since
                        && dev.regime == Regime::Surge =>
                {
                    1.0 + f.magnitude
                }
                _ => 1.0,
            };
            let e = per.entry(p.subsystem.as_str()).or_insert((0.0, Intensity::Low));
            e.0 += p.base_demand * surge;
            e.1 = e.1.max(p.latency_sensitivity);
        }
        per.into_iter()
            .map(|(sub, (base, latency_class))| {
                let key = rng::hash_str(sub);
                let mut r = rng::stream(&[self.seed, key, tick, 0x64656d]);
                let noise: f64 = StandardNormal.sample(&mut r);
                let phase = (key % 1000) as f64 / 1000.0 * std::f64::consts::TAU;
                let wave = (std::f64::consts::TAU * tick as f64 / self.config.demand_period + phase).sin();
                let mult = 1.0 + self.config.demand_amplitude * wave + self.config.demand_noise * noise;
                ResourceDemand { tick, subsystem: sub.to_owned(), requested: (base * mult).max(0.0), latency_class }
            })
            .collect()
    }

    pub fn inject(&mut self, fault: &FaultInjection) -> Result<(), FleetError> {
        if fault.device_ids.is_empty() {
            return Err(FleetError::BadInjection("no target devices".into()));
        }
        if !(fault.magnitude > 0.0) || !fault.magnitude.is_finite() {
            return Err(FleetError::BadInjection("magnitude must be positive".into()));
        }
        if let Some(last) = self.last_tick {
            if fault.at_tick < last {
                return Err(FleetError::BadInjection(format!(
                    "at_tick {} is before current tick {last}",
                    fault.at_tick
                )));
            }
        }
        let mut idx = Vec::with_capacity(fault.device_ids.len());
        for id in &fault.device_ids {
            let i =
                self.devices.iter().position(|d| &d.id == id).ok_or_else(|| FleetError::UnknownDevice(id.clone()))?;
            idx.push(i);
        }
        for i in idx {
            let d = &mut self.devices[i];
            d.regime = fault.kind.regime();
            d.regime_since = fault.at_tick;
            d.fault =
                Some(ActiveFault { kind: fault.kind, magnitude: fault.magnitude, features: fault.features.clone() });
        }
        self.injections.push(fault.clone());
        Ok(())
    }

    pub fn ground_truth(&self, tick: u64) -> BTreeMap<DeviceId, Label> {
        self.devices
            .iter()
            .map(|d| {
                let label =
                    if d.regime != Regime::Normal && tick >= d.regime_since { Label::Anomalous } else { Label::Normal };
                (d.id.clone(), label)
            })
            .collect()
    }

    /// Per-tick sample counts: `(vector samples per tick, sequences per cadence)`.
    pub fn emission_counts(&self) -> (usize, usize) {
        let mut nts = 0;
        let mut ts = 0;
        for d in &self.devices {
            for s in &self.profiles[d.type_index].emits {
                if s.time_series() {
                    ts += 1;
                } else {
                    nts += 1;
                }
            }
        }
        (nts, ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emit_vec(level: BehaviorLevel, dim: usize) -> EmitConfig {
        EmitConfig { level, dim, names: None, seq_len: None, baseline: BaselineConfig::default() }
    }

    fn emit_seq(level: BehaviorLevel, dim: usize, len: usize) -> EmitConfig {
        EmitConfig { level, dim, names: None, seq_len: Some(len), baseline: BaselineConfig::default() }
    }

    fn config() -> FleetConfig {
        let cam = ApplicationClass::lookup("face_detection").unwrap().device_type(
            "camera",
            40,
            "surveillance",
            vec![emit_vec(BehaviorLevel::B2, 8)],
        );
        let sensor = ApplicationClass::lookup("low_level_sensor").unwrap().device_type(
            "sensor",
            80,
            "environment",
            vec![emit_vec(BehaviorLevel::B1, 4)],
        );
        FleetConfig::new(vec![cam, sensor])
    }

    #[test]
    fn builds_120_reproducibly() {
        let a = Fleet::build(&config(), 7).unwrap();
        let b = Fleet::build(&config(), 7).unwrap();
        assert_eq!(a.devices.len(), 120);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.devices.iter().all(|d| d.regime == Regime::Normal));
        assert_eq!(a.devices[0].id.as_str(), "camera-0000");
    }

    #[test]
    fn zero_devices_or_duplicates_rejected() {
        let mut c = config();
        c.device_types.iter_mut().for_each(|t| t.count = 0);
        assert!(matches!(Fleet::build(&c, 1), Err(FleetError::BadConfig(_))));
        let mut d = config();
        d.device_types[1].name = "camera".into();
        assert!(matches!(Fleet::build(&d, 1), Err(FleetError::BadConfig(_))));
    }

    #[test]
    fn one_tick_emits_one_sample_per_nts_device() {
        let mut f = Fleet::build(&config(), 7).unwrap();
        let out = f.step(0).unwrap();
        assert_eq!(out.telemetry.len(), 120);
        assert_eq!(out.demands.len(), 2);
        assert!(matches!(f.step(0), Err(FleetError::NonMonotonicTick { .. })));
    }

    #[test]
    fn ts_cadence_thirty_ticks() {
        let t = ApplicationClass::lookup("health_monitoring").unwrap().device_type(
            "thermo",
            3,
            "health",
            vec![emit_seq(BehaviorLevel::B1, 1, 90), emit_vec(BehaviorLevel::B3, 2)],
        );
        let mut f = Fleet::build(&FleetConfig::new(vec![t]), 3).unwrap();
        let mut seqs_per_device = BTreeMap::new();
        let mut vecs = 0;
        for tick in 1..=30 {
            let out = f.step(tick).unwrap();
            for s in &out.telemetry {
                match s {
                    Sample::Sequence(q) => {
                        assert_eq!(tick, 30);
                        assert_eq!(q.seq_len, 90);
                        *seqs_per_device.entry(q.device_id.clone()).or_insert(0) += 1;
                    }
                    Sample::Vector(_) => vecs += 1,
                }
            }
        }
        assert_eq!(vecs, 3 * 30);
        assert_eq!(seqs_per_device.len(), 3);
        assert!(seqs_per_device.values().all(|&n| n == 1));
    }

    #[test]
    fn injection_bookkeeping_and_labels() {
        let mut f = Fleet::build(&config(), 7).unwrap();
        f.step(0).unwrap();
        let ids: BTreeSet<DeviceId> = f.devices.iter().skip(5).step_by(10).take(12).map(|d| d.id.clone()).collect();
        f.inject(&FaultInjection {
            at_tick: 10,
            device_ids: ids.clone(),
            kind: FaultKind::TrafficAnomaly,
            magnitude: 2.0,
            features: None,
        })
        .unwrap();
        assert_eq!(f.devices.iter().filter(|d| d.regime == Regime::Botnet).count(), 12);
        let before = f.ground_truth(9);
        assert!(before.values().all(|l| *l == Label::Normal));
        let after = f.ground_truth(10);
        let flagged: BTreeSet<DeviceId> =
            after.iter().filter(|(_, l)| **l == Label::Anomalous).map(|(id, _)| id.clone()).collect();
        assert_eq!(flagged, ids);

        let bad = FaultInjection {
            at_tick: 10,
            device_ids: [DeviceId::from("nope")].into_iter().collect(),
            kind: FaultKind::HardwareFault,
            magnitude: 1.0,
            features: None,
        };
        assert!(matches!(f.inject(&bad), Err(FleetError::UnknownDevice(_))));
    }

    #[test]
    fn drift_accumulates_linearly() {
        let mut f = Fleet::build(&config(), 11).unwrap();
        let target = f.devices.iter().position(|d| d.type_name == "sensor").unwrap();
        let id = f.devices[target].id.clone();
        f.inject(&FaultInjection {
            at_tick: 0,
            device_ids: [id].into_iter().collect(),
            kind: FaultKind::DegradingDrift,
            magnitude: 0.01,
            features: Some(vec![0]),
        })
        .unwrap();
        // Same RNG stream with and without the regime isolates the drift term.
        let sd = f.generators[1][0].marginal_std[0];
        let drifted = f.emit(target, 0, 100, false);
        let clean = f.emit(target, 0, 100, true);
        let shift = (drifted.cells()[0] - clean.cells()[0]) / sd;
        assert!((shift - 1.0).abs() < 1e-9, "shift {shift}");
        assert_eq!(drifted.cells()[1], clean.cells()[1]);
    }

    #[test]
    fn surge_multiplies_demand() {
        let mut a = Fleet::build(&config(), 5).unwrap();
        let b = a.clone();
        let cams: BTreeSet<DeviceId> =
            a.devices.iter().filter(|d| d.type_name == "camera").map(|d| d.id.clone()).collect();
        a.inject(&FaultInjection {
            at_tick: 0,
            device_ids: cams,
            kind: FaultKind::ResourceSurge,
            magnitude: 0.5,
            features: None,
        })
        .unwrap();
        let da = a.demands(3);
        let db = b.demands(3);
        let s = da.iter().position(|d| d.subsystem == "surveillance").unwrap();
        assert!((da[s].requested / db[s].requested - 1.5).abs() < 1e-12);
    }
}
