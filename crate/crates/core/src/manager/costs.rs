use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::engine::normal_dataset;
use super::ManagerError;
use crate::fleet::{BaselineConfig, DeviceTypeConfig, EmitConfig, Fleet, FleetConfig, Intensity};
use crate::models::{cost_profile, train, CostProfile, ModelFamily, ModelSpec, TrainedModel};
use crate::telemetry::{clean_dataset, clean_with_stats, BehaviorLevel, Dataset, DEFAULT_MISSING_LIMIT};

/// Bytes of one non-time-series sample.
pub const NTS_SAMPLE_BYTES: usize = 512;
/// Bytes of one time-series sample.
pub const TS_SAMPLE_BYTES: usize = 1024;

pub const BENCH_NTS_DIM: usize = 80;
pub const BENCH_TS_LEN: usize = 90;
pub const BENCH_DEVICES: usize = 120;

const LABEL_NOTE: &str = "note: the reference description of this setup attaches the labels the other way round \
(60 KB per minute to TS, 120 KB every 30 minutes to NTS); one NTS sample per device per minute at 0.5 KB and one \
TS sample per device per 30 minutes at 1 KB give the assignment above.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub nts_samples_per_tick: usize,
    pub ts_samples_per_cadence: usize,
    pub ts_cadence: u64,
    pub nts_bytes_per_tick: usize,
    pub ts_bytes_per_cadence: usize,
    pub note: String,
}

impl IngestReport {
    pub fn nts_kb_per_tick(&self) -> f64 {
        self.nts_bytes_per_tick as f64 / 1024.0
    }

    pub fn ts_kb_per_cadence(&self) -> f64 {
        self.ts_bytes_per_cadence as f64 / 1024.0
    }
}

pub fn ingest_accounting(fleet: &Fleet) -> IngestReport {
    let (nts, ts) = fleet.emission_counts();
    IngestReport {
        nts_samples_per_tick: nts,
        ts_samples_per_cadence: ts,
        ts_cadence: fleet.config.ts_cadence,
        nts_bytes_per_tick: nts * NTS_SAMPLE_BYTES,
        ts_bytes_per_cadence: ts * TS_SAMPLE_BYTES,
        note: LABEL_NOTE.to_owned(),
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "ingest NTS: {} samples/tick x 0.5 KB = {} KB per tick (1 tick = 1 min)",
            self.nts_samples_per_tick,
            self.nts_kb_per_tick()
        )?;
        writeln!(
            f,
            "ingest TS: {} samples every {} ticks x 1 KB = {} KB per {} min",
            self.ts_samples_per_cadence,
            self.ts_cadence,
            self.ts_kb_per_cadence(),
            self.ts_cadence
        )?;
        write!(f, "{}", self.note)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub family: ModelFamily,
    pub dim: usize,
    pub seq_len: Option<usize>,
    pub parameters: usize,
    pub profile: CostProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub ingest: IngestReport,
}

impl CostReport {
    pub fn row(&self, family: ModelFamily) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.family == family)
    }

    /// Families sorted ascending by a key.
    pub fn order_by<K: Ord>(&self, key: impl Fn(&CostRow) -> K) -> Vec<ModelFamily> {
        let mut rows: Vec<&CostRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| key(r));
        rows.into_iter().map(|r| r.family).collect()
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "family,dim,seq_len,parameters,size_bytes,latency_us,working_set_bytes")?;
        for r in &self.rows {
            writeln!(
                f,
                "{},{},{},{},{},{:.1},{}",
                r.family,
                r.dim,
                r.seq_len.map(|l| l.to_string()).unwrap_or_default(),
                r.parameters,
                r.profile.serialized_size,
                r.profile.score_latency.as_secs_f64() * 1e6,
                r.profile.peak_working_set
            )?;
        }
        write!(f, "{}", self.ingest)
    }
}

/// Profiles one model per family on its probe set. Every family must be
/// present.
pub fn report_costs(
    models: &BTreeMap<ModelFamily, (TrainedModel, Dataset)>,
    ingest: IngestReport,
) -> Result<CostReport, ManagerError> {
    let mut rows = Vec::with_capacity(4);
    for family in ModelFamily::ALL {
        let (model, probe) = models.get(&family).ok_or(ManagerError::MissingFamily(family))?;
        let profile = cost_profile(model, probe)?;
        rows.push(CostRow {
            family,
            dim: model.schema().dim(),
            seq_len: model.schema().seq_len(),
            parameters: model.parameters().len(),
            profile,
        });
    }
    Ok(CostReport { rows, ingest })
}

/// 120 devices, each emitting an 80-feature vector every tick and a
/// univariate 90-point sequence every 30 ticks.
pub fn benchmark_fleet() -> FleetConfig {
    let emits = vec![
        EmitConfig {
            level: BehaviorLevel::B1,
            dim: BENCH_NTS_DIM,
            names: None,
            seq_len: None,
            baseline: BaselineConfig { latent_dim: 8, ..Default::default() },
        },
        EmitConfig {
            level: BehaviorLevel::B2,
            dim: 1,
            names: None,
            seq_len: Some(BENCH_TS_LEN),
            baseline: BaselineConfig::default(),
        },
    ];
    FleetConfig::new(vec![DeviceTypeConfig {
        name: "bench".into(),
        count: BENCH_DEVICES,
        priority: 3,
        compute_intensity: Intensity::Medium,
        data_intensity: Intensity::Medium,
        latency_sensitivity: Intensity::Medium,
        subsystem: "bench".into(),
        base_demand: 1.0,
        emits,
    }])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkSizes {
    pub vector_samples: usize,
    pub sequence_samples: usize,
    pub probe_samples: usize,
    /// Epoch cap for the neural families; costs do not depend on it.
    pub max_epochs: usize,
}

impl Default for BenchmarkSizes {
    fn default() -> Self {
        Self { vector_samples: 1500, sequence_samples: 300, probe_samples: 200, max_epochs: usize::MAX }
    }
}

fn capped(spec: ModelSpec, max_epochs: usize) -> ModelSpec {
    match spec {
        ModelSpec::GanEd { layers, latent_dim, epochs, lr, batch, lambda_rec, alpha } => {
            ModelSpec::GanEd { layers, latent_dim, epochs: epochs.min(max_epochs), lr, batch, lambda_rec, alpha }
        }
        ModelSpec::LstmEd { layers, epochs, lr, batch } => {
            ModelSpec::LstmEd { layers, epochs: epochs.min(max_epochs), lr, batch }
        }
        other => other,
    }
}

/// Trains every family with its default spec on the benchmark shapes and
/// returns each model with a cleaned probe set drawn from disjoint ticks.
pub fn benchmark_models(
    seed: u64,
    sizes: BenchmarkSizes,
) -> Result<BTreeMap<ModelFamily, (TrainedModel, Dataset)>, ManagerError> {
    let fleet = Fleet::build(&benchmark_fleet(), seed)?;
    let jobs: Vec<(ModelFamily, BehaviorLevel, usize)> = vec![
        (ModelFamily::Ocsvm, BehaviorLevel::B1, sizes.vector_samples),
        (ModelFamily::GanEd, BehaviorLevel::B1, sizes.vector_samples),
        (ModelFamily::Marima, BehaviorLevel::B2, sizes.sequence_samples),
        (ModelFamily::LstmEd, BehaviorLevel::B2, sizes.sequence_samples),
    ];
    let probe_start = 1_000_000;
    let fleet = &fleet;
    type Job = Result<(ModelFamily, (TrainedModel, Dataset)), ManagerError>;
    let results: Vec<Job> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(family, level, n)| {
                s.spawn(move || {
                    let ds = normal_dataset(fleet, "bench", level, n, 0)?;
                    let (clean, _) = clean_dataset(&ds, DEFAULT_MISSING_LIMIT)?;
                    let spec = capped(ModelSpec::default_for(family), sizes.max_epochs);
                    let (model, _) = train(&clean, &spec, seed ^ family.tag() as u64)?;
                    let raw = normal_dataset(fleet, "bench", level, sizes.probe_samples, probe_start)?;
                    let (probe, _) = clean_with_stats(&raw, model.norm_stats(), DEFAULT_MISSING_LIMIT)?;
                    Ok((family, (model, probe)))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("benchmark thread panicked")).collect()
    });
    results.into_iter().collect()
}
