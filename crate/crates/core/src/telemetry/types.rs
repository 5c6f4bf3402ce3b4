use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TelemetryError;

/// Management-interest tier a behavior target belongs to.
///
/// The derived ordering (`B1 < B2 < B3 < B4`) is relied on for stable
/// serialization and for the column order of clustering features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorLevel {
    /// Device level: hardware failure, software malfunction, lifetime.
    B1,
    /// Network level: traffic patterns, unsafe connections, botnets.
    B2,
    /// Cloud/edge level: requested resources, offloaded tasks, latency.
    B3,
    /// Group and subsystem level.
    B4,
}

impl BehaviorLevel {
    pub const ALL: [BehaviorLevel; 4] = [Self::B1, Self::B2, Self::B3, Self::B4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::B1 => "B1",
            Self::B2 => "B2",
            Self::B3 => "B3",
            Self::B4 => "B4",
        }
    }
}

impl fmt::Display for BehaviorLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorLevel {
    type Err = TelemetryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B1" => Ok(Self::B1),
            "B2" => Ok(Self::B2),
            "B3" => Ok(Self::B3),
            "B4" => Ok(Self::B4),
            other => Err(TelemetryError::Parse(format!("unknown behavior level `{other}`"))),
        }
    }
}

/// Identifier of a single device instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Shape of the data produced by one behavior target.
///
/// Constructed only through [`FeatureSchema::vector`] / [`FeatureSchema::sequence`]
/// (or deserialization, which re-validates), so `dim >= 1` always holds and
/// sequence schemas always carry `seq_len >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FeatureSchema {
    level: BehaviorLevel,
    names: Vec<String>,
    seq_len: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    level: BehaviorLevel,
    names: Vec<String>,
    time_series: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seq_len: Option<usize>,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = TelemetryError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        match (raw.time_series, raw.seq_len) {
            (true, Some(len)) => Self::sequence(raw.level, raw.names, len),
            (true, None) => Err(TelemetryError::InvalidSchema("time-series schema without seq_len".into())),
            (false, Some(_)) => Err(TelemetryError::InvalidSchema("seq_len given for a vector schema".into())),
            (false, None) => Self::vector(raw.level, raw.names),
        }
    }
}

impl From<FeatureSchema> for RawSchema {
    fn from(s: FeatureSchema) -> Self {
        RawSchema { level: s.level, time_series: s.seq_len.is_some(), names: s.names, seq_len: s.seq_len }
    }
}

impl FeatureSchema {
    pub fn vector(level: BehaviorLevel, names: Vec<String>) -> Result<Self, TelemetryError> {
        if names.is_empty() {
            return Err(TelemetryError::InvalidSchema("schema needs at least one feature".into()));
        }
        Ok(Self { level, names, seq_len: None })
    }

    pub fn sequence(level: BehaviorLevel, names: Vec<String>, seq_len: usize) -> Result<Self, TelemetryError> {
        if names.is_empty() {
            return Err(TelemetryError::InvalidSchema("schema needs at least one feature".into()));
        }
        if seq_len < 2 {
            return Err(TelemetryError::InvalidSchema(format!("seq_len must be >= 2, got {seq_len}")));
        }
        Ok(Self { level, names, seq_len: Some(seq_len) })
    }

    /// Schema with generated feature names `f0..f{dim-1}`.
    pub fn anonymous(level: BehaviorLevel, dim: usize, seq_len: Option<usize>) -> Result<Self, TelemetryError> {
        let names = (0..dim).map(|i| format!("f{i}")).collect();
        match seq_len {
            Some(len) => Self::sequence(level, names, len),
            None => Self::vector(level, names),
        }
    }

    pub fn level(&self) -> BehaviorLevel {
        self.level
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn time_series(&self) -> bool {
        self.seq_len.is_some()
    }

    pub fn seq_len(&self) -> Option<usize> {
        self.seq_len
    }

    /// Canonical text used for the model-store schema digest.
    pub fn canonical(&self) -> String {
        format!("{}|{}|{}|{}", self.level, self.seq_len.map_or(0, |l| l), self.dim(), self.names.join(","))
    }
}

/// Feature dimensionality of a behavior target.
pub fn dimensionality(schema: &FeatureSchema) -> usize {
    schema.dim()
}

/// One non-time-series feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub tick: u64,
    pub device_id: DeviceId,
    pub level: BehaviorLevel,
    pub values: Vec<f64>,
}

/// One fixed-length sequence, stored row-major (`seq_len` rows of `dim` values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub tick: u64,
    pub device_id: DeviceId,
    pub level: BehaviorLevel,
    pub seq_len: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SequenceSample {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn value(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.dim + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sample {
    Vector(TelemetrySample),
    Sequence(SequenceSample),
}

impl Sample {
    pub fn tick(&self) -> u64 {
        match self {
            Sample::Vector(s) => s.tick,
            Sample::Sequence(s) => s.tick,
        }
    }

    pub fn device_id(&self) -> &DeviceId {
        match self {
            Sample::Vector(s) => &s.device_id,
            Sample::Sequence(s) => &s.device_id,
        }
    }

    pub fn level(&self) -> BehaviorLevel {
        match self {
            Sample::Vector(s) => s.level,
            Sample::Sequence(s) => s.level,
        }
    }

    pub fn is_sequence(&self) -> bool {
        matches!(self, Sample::Sequence(_))
    }

    /// All raw cells, row-major for sequences.
    pub fn cells(&self) -> &[f64] {
        match self {
            Sample::Vector(s) => &s.values,
            Sample::Sequence(s) => &s.data,
        }
    }

    pub fn cells_mut(&mut self) -> &mut [f64] {
        match self {
            Sample::Vector(s) => &mut s.values,
            Sample::Sequence(s) => &mut s.data,
        }
    }

    pub fn as_vector(&self) -> Option<&TelemetrySample> {
        match self {
            Sample::Vector(s) => Some(s),
            Sample::Sequence(_) => None,
        }
    }

    pub fn as_sequence(&self) -> Option<&SequenceSample> {
        match self {
            Sample::Sequence(s) => Some(s),
            Sample::Vector(_) => None,
        }
    }
}

/// Per-feature statistics captured from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Used to impute missing vector cells.
    pub median: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn normalize(&self, j: usize, v: f64) -> f64 {
        let sd = self.std[j];
        if sd > 0.0 {
            (v - self.mean[j]) / sd
        } else {
            0.0
        }
    }
}

/// A homogeneous collection of samples for one schema.
///
/// `norm_stats` is present once the samples have been normalized and records
/// the statistics used to do so.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    pub norm_stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, samples: Vec<Sample>) -> Self {
        Self { schema, samples, norm_stats: None }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
