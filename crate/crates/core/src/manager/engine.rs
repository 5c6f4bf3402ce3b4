//! The observe, synthesize, respond cycle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::config::OrcaConfig;
use super::registry::{register_models, ModelRegistry};
use super::ManagerError;
use crate::fleet::{FaultInjection, Fleet, ResourceDemand};
use crate::models::{train, ModelError, TrainingReport};
use crate::response::{
    build_maintenance_list, compute_reward, format_audit, format_maintenance, learn_step, propose_allocation,
    AllocationDecision, AllocationState, MaintenanceList, OlArimaState, PolicyState, SubsystemState,
};
use crate::rng;
use crate::synth::{
    build_score_matrix, cluster_and_outliers, format_insight, group_insights, GroupDefinition, GroupInsight, GroupKind,
    InsightHistory, InsightOptions, OutlierReport, ScoreMatrix, ScoreRecord, SynthError, UsageForecast,
    UsageForecaster,
};
use crate::telemetry::{clean_dataset, BehaviorLevel, Dataset, DeviceId, Sample};

const TRAIN_TAG: u64 = 0x0074_7261_696e;

/// `tick,device_id,level,value,raw,alarming`.
pub fn format_score(r: &ScoreRecord) -> String {
    format!("{},{},{},{},{},{}", r.tick, r.device_id, r.level, r.score.value, r.score.raw, u8::from(r.score.alarming))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub observe: Duration,
    pub synthesize: Duration,
    pub respond: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub tick: u64,
    pub samples_scored: usize,
    pub rejected: usize,
    pub alarms: usize,
    pub outlier_count: usize,
    pub maintenance_count: usize,
    /// Final allocation per subsystem.
    pub allocations: Vec<(String, f64)>,
    pub reward: f64,
    pub phase_times: PhaseTimes,
}

impl CycleReport {
    /// Report line without wall times; identical across replays.
    pub fn summary(&self) -> String {
        let alloc: Vec<String> = self.allocations.iter().map(|(s, a)| format!("{s}={a:.4}")).collect();
        format!(
            "tick={} scored={} rejected={} alarms={} outliers={} maintenance={} reward={:.6} allocation=[{}]",
            self.tick,
            self.samples_scored,
            self.rejected,
            self.alarms,
            self.outlier_count,
            self.maintenance_count,
            self.reward,
            alloc.join(" ")
        )
    }
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        write!(
            f,
            "{} observe_ms={:.2} synthesize_ms={:.2} respond_ms={:.2}",
            self.summary(),
            ms(self.phase_times.observe),
            ms(self.phase_times.synthesize),
            ms(self.phase_times.respond)
        )
    }
}

/// Everything one cycle produced, kept until the next cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutputs {
    pub records: Vec<ScoreRecord>,
    pub matrix: ScoreMatrix,
    pub outliers: OutlierReport,
    pub insights: Vec<GroupInsight>,
    pub forecasts: Vec<UsageForecast>,
    pub maintenance: MaintenanceList,
    pub allocation_state: AllocationState,
    pub decision: AllocationDecision,
    pub reward: f64,
}

/// Normal-regime samples of one target, drawn round-robin over the devices
/// of its type starting at `start_tick`.
pub fn normal_dataset(
    fleet: &Fleet,
    device_type: &str,
    level: BehaviorLevel,
    n: usize,
    start_tick: u64,
) -> Result<Dataset, ManagerError> {
    let ti = fleet
        .profiles
        .iter()
        .position(|p| p.type_name == device_type)
        .ok_or_else(|| ManagerError::Config(format!("unknown device type `{device_type}`")))?;
    let ei = fleet.profiles[ti]
        .emits
        .iter()
        .position(|s| s.level() == level)
        .ok_or_else(|| ManagerError::Config(format!("`{device_type}` emits nothing at {level}")))?;
    let schema = fleet.profiles[ti].emits[ei].clone();
    let devs: Vec<usize> = (0..fleet.devices.len()).filter(|&i| fleet.devices[i].type_index == ti).collect();
    if devs.is_empty() {
        return Err(ManagerError::Config(format!("fleet has no `{device_type}` devices")));
    }
    let step = if schema.time_series() { fleet.config.ts_cadence } else { 1 };
    let samples = (0..n)
        .map(|i| {
            let tick = start_tick + (i / devs.len()) as u64 * step;
            fleet.emit(devs[i % devs.len()], ei, tick, true)
        })
        .collect();
    Ok(Dataset::new(schema, samples))
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub config: OrcaConfig,
    pub seed: u64,
    pub registry: ModelRegistry,
    pub fleet: Fleet,
    pub groups: Vec<GroupDefinition>,
    pub(crate) device_types: BTreeMap<DeviceId, String>,
    pub(crate) registered: BTreeMap<DeviceId, Vec<BehaviorLevel>>,
    pub(crate) subsystems: Vec<String>,
    pub(crate) subsystem_members: BTreeMap<String, BTreeSet<DeviceId>>,
    pub capacity: f64,
    pub(crate) score_window: VecDeque<ScoreRecord>,
    pub ol_states: BTreeMap<(DeviceId, BehaviorLevel), OlArimaState>,
    pub policy: PolicyState,
    pub forecasters: BTreeMap<String, UsageForecaster>,
    pub insight_history: InsightHistory,
    pub log_dir: Option<PathBuf>,
    pub(crate) last: Option<CycleOutputs>,
}

fn default_groups(fleet: &Fleet) -> Vec<GroupDefinition> {
    let mut by: BTreeMap<(GroupKind, String), BTreeSet<DeviceId>> = BTreeMap::new();
    for d in &fleet.devices {
        for (kind, id) in [
            (GroupKind::Subsystem, &d.group_tags.subsystem),
            (GroupKind::Location, &d.group_tags.location),
            (GroupKind::Batch, &d.group_tags.batch),
        ] {
            by.entry((kind, id.clone())).or_default().insert(d.id.clone());
        }
    }
    by.into_iter().map(|((kind, id), members)| GroupDefinition { kind, id, members }).collect()
}

impl Engine {
    /// Builds the fleet and an untrained registry. `seed` overrides the
    /// config's seed.
    pub fn new(config: OrcaConfig, seed: Option<u64>) -> Result<Self, ManagerError> {
        config.validate()?;
        let seed = seed.unwrap_or(config.seed);
        let registry = register_models(&config)?;
        let fleet = Fleet::build(&config.fleet, seed)?;
        let groups = if config.groups.is_empty() { default_groups(&fleet) } else { config.groups.clone() };
        let device_types: BTreeMap<DeviceId, String> =
            fleet.devices.iter().map(|d| (d.id.clone(), d.type_name.clone())).collect();
        for g in &groups {
            if let Some(bad) = g.members.iter().find(|m| !device_types.contains_key(*m)) {
                return Err(ManagerError::Config(format!("group `{}` names unknown device {bad}", g.id)));
            }
        }
        let registered = fleet
            .devices
            .iter()
            .map(|d| {
                let levels: Vec<BehaviorLevel> = fleet.profiles[d.type_index]
                    .emits
                    .iter()
                    .map(|s| s.level())
                    .filter(|l| registry.get(&d.type_name, *l).is_some())
                    .collect();
                (d.id.clone(), levels)
            })
            .collect();
        let subsystems = fleet.subsystems();
        let mut subsystem_members: BTreeMap<String, BTreeSet<DeviceId>> = BTreeMap::new();
        for d in &fleet.devices {
            subsystem_members.entry(d.group_tags.subsystem.clone()).or_default().insert(d.id.clone());
        }
        let base: f64 = fleet.devices.iter().map(|d| fleet.profiles[d.type_index].base_demand).sum();
        let capacity = config.response.capacity.unwrap_or(0.75 * base).max(f64::MIN_POSITIVE);
        let policy = PolicyState::new(subsystems.len(), config.response.policy.clone(), rng::mix(&[seed, 0x706f6c]));
        let forecasters = subsystems
            .iter()
            .map(|s| {
                let f = UsageForecaster::new(s, config.synth.forecast.clone(), rng::mix(&[seed, rng::hash_str(s)]));
                (s.clone(), f)
            })
            .collect();
        let insight_history = InsightHistory::new(config.synth.insight_depth);
        Ok(Self {
            config,
            seed,
            registry,
            fleet,
            groups,
            device_types,
            registered,
            subsystems,
            subsystem_members,
            capacity,
            score_window: VecDeque::new(),
            ol_states: BTreeMap::new(),
            policy,
            forecasters,
            insight_history,
            log_dir: None,
            last: None,
        })
    }

    pub fn last_outputs(&self) -> Option<&CycleOutputs> {
        self.last.as_ref()
    }

    pub fn subsystems(&self) -> &[String] {
        &self.subsystems
    }

    pub fn device_type(&self, id: &DeviceId) -> Option<&str> {
        self.device_types.get(id).map(String::as_str)
    }

    /// Fleet with the same configuration under a derived seed, so training
    /// data never coincides with what the live fleet emits.
    pub fn training_fleet(&self) -> Result<Fleet, ManagerError> {
        Ok(Fleet::build(&self.config.fleet, rng::mix(&[self.seed, TRAIN_TAG]))?)
    }

    /// Trains every registry entry on simulator normal-regime data.
    pub fn train_all(&mut self) -> Result<BTreeMap<(String, BehaviorLevel), TrainingReport>, ManagerError> {
        let fleet = self.training_fleet()?;
        let mut data = BTreeMap::new();
        for ((t, l), e) in &self.registry.entries {
            let n = if e.schema.time_series() {
                self.config.training.sequence_samples
            } else {
                self.config.training.vector_samples
            };
            data.insert((t.clone(), *l), normal_dataset(&fleet, t, *l, n, 0)?);
        }
        self.train_on(data)
    }

    /// Trains from raw telemetry, grouping samples by target.
    pub fn train_from_samples(
        &mut self,
        samples: Vec<Sample>,
    ) -> Result<BTreeMap<(String, BehaviorLevel), TrainingReport>, ManagerError> {
        let mut data: BTreeMap<(String, BehaviorLevel), Vec<Sample>> = BTreeMap::new();
        for s in samples {
            let t = self
                .device_types
                .get(s.device_id())
                .ok_or_else(|| ManagerError::Data(format!("telemetry from unknown device {}", s.device_id())))?;
            data.entry((t.clone(), s.level())).or_default().push(s);
        }
        let mut sets = BTreeMap::new();
        for (key, e) in &self.registry.entries {
            let samples = data.remove(key).unwrap_or_default();
            sets.insert(key.clone(), Dataset::new(e.schema.clone(), samples));
        }
        self.train_on(sets)
    }

    fn train_on(
        &mut self,
        data: BTreeMap<(String, BehaviorLevel), Dataset>,
    ) -> Result<BTreeMap<(String, BehaviorLevel), TrainingReport>, ManagerError> {
        let missing = self.config.thresholds.missing_limit;
        let seed = self.seed;
        let jobs: Vec<_> = data
            .into_iter()
            .map(|(key, ds)| {
                let spec = self.registry.entries[&key].spec.clone();
                (key, ds, spec)
            })
            .collect();
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .into_iter()
                .map(|(key, ds, spec)| {
                    s.spawn(move || {
                        let model_seed = rng::mix(&[seed, rng::hash_str(&key.0), key.1.index() as u64]);
                        let res = (|| -> Result<_, ManagerError> {
                            if ds.is_empty() {
                                return Err(ModelError::InsufficientData { have: 0, need: 1 }.into());
                            }
                            let (clean, _) = clean_dataset(&ds, missing)?;
                            Ok(train(&clean, &spec, model_seed)?)
                        })();
                        (key, res)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        let mut reports = BTreeMap::new();
        for (key, res) in results {
            let (model, report) = res.map_err(|e| ManagerError::Training {
                device_type: key.0.clone(),
                level: key.1,
                source: Box::new(e),
            })?;
            let entry = self.registry.entries.get_mut(&key).expect("trained key is registered");
            let version = entry.model.as_ref().map_or(1, |m| m.version() + 1);
            entry.model = Some(model.with_meta(self.fleet.last_tick().unwrap_or(0), version));
            reports.insert(key, report);
        }
        Ok(reports)
    }

    pub fn inject(&mut self, fault: &FaultInjection) -> Result<(), ManagerError> {
        Ok(self.fleet.inject(fault)?)
    }

    fn score_samples(&self, samples: &[Sample]) -> Result<(Vec<ScoreRecord>, usize), ManagerError> {
        let th = &self.config.thresholds;
        let score_one = |s: &Sample| -> Result<Option<ScoreRecord>, ManagerError> {
            let t = self
                .device_types
                .get(s.device_id())
                .ok_or_else(|| ManagerError::Data(format!("sample from unknown device {}", s.device_id())))?;
            let model = self.registry.model(t, s.level())?;
            match model.evaluate(s, th.missing_limit, th.alarm) {
                Ok(score) => {
                    Ok(Some(ScoreRecord { tick: s.tick(), device_id: s.device_id().clone(), level: s.level(), score }))
                }
                Err(ModelError::Rejected(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
        let chunk = samples.len().div_ceil(workers).max(1);
        let results: Vec<Result<Option<ScoreRecord>, ManagerError>> = if samples.len() < 64 || workers == 1 {
            samples.iter().map(score_one).collect()
        } else {
            std::thread::scope(|sc| {
                let handles: Vec<_> = samples
                    .chunks(chunk)
                    .map(|c| sc.spawn(move || c.iter().map(score_one).collect::<Vec<_>>()))
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("scoring thread panicked")).collect()
            })
        };
        let mut records = Vec::with_capacity(results.len());
        let mut rejected = 0;
        for r in results {
            match r? {
                Some(rec) => records.push(rec),
                None => rejected += 1,
            }
        }
        Ok((records, rejected))
    }

    fn append_log(&self, name: &str, lines: impl IntoIterator<Item = String>) -> Result<(), ManagerError> {
        let Some(dir) = &self.log_dir else { return Ok(()) };
        let f = OpenOptions::new().create(true).append(true).open(dir.join(name))?;
        let mut w = BufWriter::new(f);
        for l in lines {
            writeln!(w, "{l}")?;
        }
        w.flush()?;
        Ok(())
    }

    fn allocation_state(
        &self,
        tick: u64,
        demands: &[ResourceDemand],
        forecasts: &[UsageForecast],
        m: &ScoreMatrix,
    ) -> Result<AllocationState, ManagerError> {
        let alarm = self.config.thresholds.alarm;
        let subs = self
            .subsystems
            .iter()
            .map(|name| {
                let demand = demands.iter().find(|d| &d.subsystem == name).map_or(0.0, |d| d.requested);
                let predicted = forecasts
                    .iter()
                    .find(|f| &f.subsystem == name)
                    .and_then(|f| f.predicted.first().copied())
                    .unwrap_or(demand);
                let cells: Vec<f64> = self.subsystem_members[name]
                    .iter()
                    .filter_map(|id| m.rows.get(id))
                    .flat_map(|r| r.values().filter_map(|c| c.current()))
                    .collect();
                let n = cells.len().max(1) as f64;
                SubsystemState {
                    name: name.clone(),
                    priority: self.fleet.subsystem_priority(name),
                    demand,
                    predicted_usage: predicted,
                    mean_behavior: cells.iter().sum::<f64>() / n,
                    alarm_fraction: cells.iter().filter(|v| **v >= alarm).count() as f64 / n,
                }
            })
            .collect();
        Ok(AllocationState::new(tick, self.capacity, subs)?)
    }

    pub fn run_cycle(&mut self, tick: u64) -> Result<CycleReport, ManagerError> {
        // observe
        let t0 = Instant::now();
        let step = self.fleet.step(tick)?;
        let (records, rejected) = self.score_samples(&step.telemetry)?;
        self.append_log("scores.log", records.iter().map(format_score))?;
        let window = self.config.synth.window;
        self.score_window.extend(records.iter().cloned());
        let lo = tick.saturating_sub(window.saturating_sub(1));
        while self.score_window.front().is_some_and(|r| r.tick < lo) {
            self.score_window.pop_front();
        }
        let observe = t0.elapsed();

        // synthesize
        let t1 = Instant::now();
        let matrix = build_score_matrix(tick, self.score_window.iter(), &self.registered, window);
        let cfg = &self.config.synth;
        let k = cfg.k.map_or(crate::synth::KChoice::Auto, crate::synth::KChoice::Fixed);
        let outliers = match cluster_and_outliers(&matrix, k, rng::mix(&[self.seed, tick, 0x636c]), cfg.restarts) {
            Ok((_, report)) => report,
            Err(SynthError::TooFewDevices { .. }) => OutlierReport { tick, outliers: Vec::new() },
            Err(e) => return Err(e.into()),
        };
        let opts = InsightOptions { k: cfg.top_k, alarm_threshold: self.config.thresholds.alarm };
        let insights = group_insights(&matrix, &self.groups, opts, &mut self.insight_history)?;
        let horizon = cfg.forecast_horizon;
        let mut forecasts = Vec::with_capacity(self.forecasters.len());
        for d in &step.demands {
            if let Some(f) = self.forecasters.get_mut(&d.subsystem) {
                f.observe(d.requested);
                forecasts.push(f.forecast(tick, horizon));
            }
        }
        let synthesize = t1.elapsed();

        // respond
        let t2 = Instant::now();
        let (p, d) = (self.config.response.ar_order, self.config.response.differencing);
        for r in &records {
            self.ol_states
                .entry((r.device_id.clone(), r.level))
                .or_insert_with(|| OlArimaState::new(r.device_id.clone(), r.level, p, d))
                .update(r.score.value);
        }
        let maintenance = build_maintenance_list(
            &outliers,
            &self.ol_states,
            self.config.response.maintenance_window,
            self.config.thresholds.alarm,
        );
        let alloc_state = self.allocation_state(tick, &step.demands, &forecasts, &matrix)?;
        let decision = propose_allocation(&alloc_state, &self.policy)?;
        let reward = compute_reward(&decision, &alloc_state, &self.config.response.qoe)?;
        learn_step(&mut self.policy, &decision, reward)?;
        let respond = t2.elapsed();

        let report = CycleReport {
            tick,
            samples_scored: records.len(),
            rejected,
            alarms: records.iter().filter(|r| r.score.alarming).count(),
            outlier_count: outliers.outliers.len(),
            maintenance_count: maintenance.items.len(),
            allocations: self.subsystems.iter().cloned().zip(decision.allocations.iter().copied()).collect(),
            reward,
            phase_times: PhaseTimes { observe, synthesize, respond },
        };
        if self.log_dir.is_some() {
            self.append_log("insights.log", insights.iter().map(format_insight))?;
            self.append_log("maintenance.log", maintenance.items.iter().map(|i| format_maintenance(tick, i)))?;
            self.append_log("allocation.log", format_audit(&decision, &alloc_state, reward))?;
            self.append_log("cycles.log", [report.summary()])?;
        }
        self.last = Some(CycleOutputs {
            records,
            matrix,
            outliers,
            insights,
            forecasts,
            maintenance,
            allocation_state: alloc_state,
            decision,
            reward,
        });
        Ok(report)
    }

    /// Runs `ticks` cycles after the fleet's last tick.
    pub fn run(&mut self, ticks: u64) -> Result<Vec<CycleReport>, ManagerError> {
        let start = self.fleet.last_tick().map_or(0, |t| t + 1);
        (start..start + ticks).map(|t| self.run_cycle(t)).collect()
    }

    pub fn set_log_dir(&mut self, dir: &Path) {
        self.log_dir = Some(dir.to_path_buf());
    }
}
