//! One-class behavior models: family selection, training, calibrated
//! scoring, persistence and cost profiling.

mod calibration;
mod cost;
pub mod ganed;
pub mod gradcheck;
pub mod lstmed;
pub mod marima;
pub mod nn;
pub mod ocsvm;
mod store;

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::Calibration;
pub use cost::{cost_profile, CostProfile};
pub use store::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};

use crate::rng;
use crate::telemetry::{prepare_sample, Dataset, FeatureSchema, NormStats, RejectReason, Sample};
use ganed::GanEd;
use lstmed::LstmEd;
use marima::VarModel;
use nn::Sgd;
use ocsvm::{Ocsvm, SolveError, SolverOptions};

pub const DEFAULT_ALARM_THRESHOLD: f64 = 0.9;
pub const DEFAULT_DIM_THRESHOLD: usize = 20;
/// One sample in `HOLDOUT_EVERY` goes to the calibration holdout.
pub const HOLDOUT_EVERY: usize = 5;
const HOLDOUT_KEY: u64 = 0x686f_6c64;
const OCSVM_MAX_TRAIN: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "OCSVM")]
    Ocsvm,
    #[serde(rename = "MARIMA")]
    Marima,
    #[serde(rename = "GANED")]
    GanEd,
    #[serde(rename = "LSTMED")]
    LstmEd,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [Self::Ocsvm, Self::Marima, Self::GanEd, Self::LstmEd];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ocsvm => "OCSVM",
            Self::Marima => "MARIMA",
            Self::GanEd => "GANED",
            Self::LstmEd => "LSTMED",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn time_series(self) -> bool {
        matches!(self, Self::Marima | Self::LstmEd)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Picks a family from whether the data is sequential and how wide it is.
pub fn select_family(time_series: bool, dim: usize, dim_threshold: usize) -> ModelFamily {
    match (time_series, dim < dim_threshold) {
        (false, true) => ModelFamily::Ocsvm,
        (true, true) => ModelFamily::Marima,
        (false, false) => ModelFamily::GanEd,
        (true, false) => ModelFamily::LstmEd,
    }
}

fn default_layers() -> Vec<usize> {
    vec![64, 32]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum ModelSpec {
    #[serde(rename = "OCSVM")]
    Ocsvm {
        nu: f64,
        /// Defaults to `1 / dim`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rbf_gamma: Option<f64>,
    },
    #[serde(rename = "MARIMA")]
    Marima { p: usize, d: usize },
    #[serde(rename = "GANED")]
    GanEd {
        #[serde(default = "default_layers")]
        layers: Vec<usize>,
        latent_dim: usize,
        epochs: usize,
        lr: f64,
        batch: usize,
        #[serde(default = "one")]
        lambda_rec: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    #[serde(rename = "LSTMED")]
    LstmEd {
        #[serde(default = "default_layers")]
        layers: Vec<usize>,
        epochs: usize,
        lr: f64,
        batch: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.9
}

impl ModelSpec {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Ocsvm => Self::Ocsvm { nu: 0.05, rbf_gamma: None },
            ModelFamily::Marima => Self::Marima { p: 3, d: 0 },
            ModelFamily::GanEd => Self::GanEd {
                layers: default_layers(),
                latent_dim: 16,
                epochs: 40,
                lr: 0.005,
                batch: 32,
                lambda_rec: 1.0,
                alpha: 0.9,
            },
            ModelFamily::LstmEd => Self::LstmEd { layers: default_layers(), epochs: 15, lr: 0.01, batch: 16 },
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            Self::Ocsvm { .. } => ModelFamily::Ocsvm,
            Self::Marima { .. } => ModelFamily::Marima,
            Self::GanEd { .. } => ModelFamily::GanEd,
            Self::LstmEd { .. } => ModelFamily::LstmEd,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_owned()));
        let layers_ok = |l: &[usize]| !l.is_empty() && l.iter().all(|w| *w > 0);
        match self {
            Self::Ocsvm { nu, rbf_gamma } => {
                if !(*nu > 0.0 && *nu <= 1.0) {
                    return bad("nu must lie in (0, 1]");
                }
                if let Some(g) = rbf_gamma {
                    if !(*g > 0.0 && g.is_finite()) {
                        return bad("rbf_gamma must be positive");
                    }
                }
            }
            Self::Marima { p, d } => {
                if *p < 1 {
                    return bad("p must be at least 1");
                }
                if *d > 1 {
                    return bad("d must be 0 or 1");
                }
            }
            Self::GanEd { layers, latent_dim, epochs, lr, batch, lambda_rec, alpha } => {
                if !layers_ok(layers) || *latent_dim == 0 || *epochs == 0 || *batch == 0 {
                    return bad("layers, latent_dim, epochs and batch must be positive");
                }
                if !(*lr > 0.0) || !(*lambda_rec >= 0.0) || !(0.0..=1.0).contains(alpha) {
                    return bad("lr > 0, lambda_rec >= 0 and alpha in [0, 1] required");
                }
            }
            Self::LstmEd { layers, epochs, lr, batch } => {
                if !layers_ok(layers) || *epochs == 0 || *batch == 0 || !(*lr > 0.0) {
                    return bad("layers, epochs, batch and lr must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub value: f64,
    pub raw: f64,
    pub alarming: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Discriminator loss; GAN-ED only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator_loss: Option<f64>,
    /// Mean reconstruction error on the held-out split after the epoch.
    pub holdout_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Held-out reconstruction error of the untrained network.
    pub initial_holdout_error: f64,
    pub epochs: Vec<EpochStats>,
    pub train_samples: usize,
    pub holdout_samples: usize,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("insufficient data: have {have}, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("solver hit its iteration cap with KKT violation {violation:.3e}")]
    NonConvergence { violation: f64 },
    #[error("least-squares design is singular even with ridge regularization")]
    SingularDesign,
    #[error("training diverged at epoch {epoch}")]
    DivergedTraining { epoch: usize, report: Box<TrainingReport> },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("dataset must be cleaned before training")]
    NotCleaned,
    #[error("sample rejected: {}", .0.as_str())]
    Rejected(RejectReason),
    #[error("corrupt model store: {0}")]
    CorruptStore(String),
    #[error("model store version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Body {
    Ocsvm(Ocsvm),
    Marima(VarModel),
    GanEd { net: GanEd, params: Vec<f64> },
    LstmEd { net: LstmEd, params: Vec<f64> },
}

/// A trained, calibrated model. Immutable once built; safe to share across
/// scoring threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    spec: ModelSpec,
    schema: FeatureSchema,
    norm_stats: NormStats,
    body: Body,
    calibration: Calibration,
    trained_at: u64,
    version: u32,
}

impl TrainedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> ModelFamily {
        self.spec.family()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm_stats
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn trained_at(&self) -> u64 {
        self.trained_at
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Copy with new bookkeeping fields; parameters are untouched.
    pub fn with_meta(mut self, trained_at: u64, version: u32) -> Self {
        self.trained_at = trained_at;
        self.version = version;
        self
    }

    /// Flat parameter vector.
    pub fn parameters(&self) -> Vec<f64> {
        match &self.body {
            Body::Ocsvm(m) => {
                let mut p = vec![m.gamma, m.rho];
                p.extend_from_slice(&m.alpha);
                p.extend_from_slice(&m.support);
                p
            }
            Body::Marima(m) => m.params.clone(),
            Body::GanEd { params, .. } | Body::LstmEd { params, .. } => params.clone(),
        }
    }

    /// Integers needed, together with the spec, to rebuild the structure
    /// around [`TrainedModel::parameters`].
    pub fn descriptor(&self) -> Vec<u64> {
        match &self.body {
            Body::Ocsvm(m) => vec![m.dim as u64, m.support_count() as u64],
            Body::Marima(m) => vec![m.dim as u64, m.p as u64, m.d as u64],
            Body::GanEd { net, .. } => {
                let mut d = vec![net.dim as u64, net.latent as u64];
                d.extend(net.encoder.sizes[1..net.encoder.sizes.len() - 1].iter().map(|w| *w as u64));
                d
            }
            Body::LstmEd { net, .. } => {
                let mut d = vec![net.dim as u64];
                d.extend(net.widths.iter().map(|w| *w as u64));
                d
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        spec: ModelSpec,
        schema: FeatureSchema,
        norm_stats: NormStats,
        descriptor: &[u64],
        params: Vec<f64>,
        calibration: Calibration,
        trained_at: u64,
        version: u32,
    ) -> Result<Self, String> {
        let dim = schema.dim();
        if descriptor.first().copied() != Some(dim as u64) {
            return Err("descriptor dimension differs from schema".into());
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        let body = match &spec {
            ModelSpec::Ocsvm { .. } => {
                let m = *descriptor.get(1).ok_or("short descriptor")? as usize;
                if params.len() != 2 + m + m * dim {
                    return Err("parameter length".into());
                }
                Body::Ocsvm(Ocsvm {
                    dim,
                    gamma: params[0],
                    rho: params[1],
                    alpha: params[2..2 + m].to_vec(),
                    support: params[2 + m..].to_vec(),
                })
            }
            ModelSpec::Marima { p, d } => {
                if params.len() != dim + p * dim * dim || descriptor.get(1..3) != Some(&[*p as u64, *d as u64][..]) {
                    return Err("parameter length".into());
                }
                Body::Marima(VarModel { dim, p: *p, d: *d, params })
            }
            ModelSpec::GanEd { layers, latent_dim, alpha, .. } => {
                let net = GanEd::new(dim, layers, *latent_dim, *alpha);
                if params.len() != net.param_count() {
                    return Err("parameter length".into());
                }
                Body::GanEd { net, params }
            }
            ModelSpec::LstmEd { layers, .. } => {
                let net = LstmEd::new(dim, layers);
                if params.len() != net.param_count() {
                    return Err("parameter length".into());
                }
                Body::LstmEd { net, params }
            }
        };
        Ok(Self { spec, schema, norm_stats, body, calibration, trained_at, version })
    }

    fn check(&self, sample: &Sample) -> Result<(), ModelError> {
        let ok = match (sample, self.schema.seq_len()) {
            (Sample::Vector(v), None) => v.values.len() == self.schema.dim(),
            (Sample::Sequence(s), Some(len)) => s.seq_len == len && s.dim == self.schema.dim(),
            _ => false,
        };
        if !ok || sample.level() != self.schema.level() {
            return Err(ModelError::SchemaMismatch(format!(
                "sample for {} does not fit {}",
                sample.device_id(),
                self.schema.canonical()
            )));
        }
        Ok(())
    }

    /// Family-specific error of an already-normalized sample.
    pub fn raw_error(&self, sample: &Sample) -> Result<f64, ModelError> {
        self.check(sample)?;
        Ok(self.raw_cells(sample.cells()))
    }

    fn raw_cells(&self, x: &[f64]) -> f64 {
        match &self.body {
            Body::Ocsvm(m) => m.raw_error(x),
            Body::Marima(m) => m.raw_error(x),
            Body::GanEd { net, params } => net.raw_error(params, x),
            Body::LstmEd { net, params } => net.raw_error(params, x),
        }
    }

    pub fn score(&self, sample: &Sample) -> Result<AnomalyScore, ModelError> {
        self.score_with_threshold(sample, DEFAULT_ALARM_THRESHOLD)
    }

    pub fn score_with_threshold(&self, sample: &Sample, threshold: f64) -> Result<AnomalyScore, ModelError> {
        let raw = self.raw_error(sample)?;
        let value = self.calibration.percentile(raw);
        Ok(AnomalyScore { value, raw, alarming: value >= threshold })
    }

    /// Cleans a raw sample with the model's stored statistics, then scores it.
    pub fn evaluate(&self, sample: &Sample, missing_limit: f64, threshold: f64) -> Result<AnomalyScore, ModelError> {
        let s = prepare_sample(sample, &self.schema, &self.norm_stats, missing_limit).map_err(ModelError::Rejected)?;
        self.score_with_threshold(&s, threshold)
    }

    pub(crate) fn working_floats(&self) -> usize {
        let dim = self.schema.dim();
        match &self.body {
            Body::Ocsvm(m) => m.support_count() + dim,
            Body::Marima(m) => self.schema.seq_len().unwrap_or(1) * dim + 2 * m.dim,
            Body::GanEd { net, .. } => {
                let s = |m: &nn::Mlp| m.sizes.iter().sum::<usize>();
                s(&net.encoder) + s(&net.generator) + 2 * s(&net.discriminator)
            }
            Body::LstmEd { net, .. } => net.activation_footprint(self.schema.seq_len().unwrap_or(1)),
        }
    }
}

/// Training set and held-out calibration split of a cleaned dataset.
struct Split<'a> {
    train: Vec<&'a [f64]>,
    holdout: Vec<&'a [f64]>,
}

/// Calibration holdout of `n` samples: a fixed pseudo-random `n / HOLDOUT_EVERY`
/// of the indices. Datasets are often drawn round-robin over devices, and a
/// fixed stride would then hold out the same few devices every time.
pub fn holdout_mask(n: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(&[HOLDOUT_KEY, n as u64]));
    let mut mask = vec![false; n];
    idx.iter().take(n / HOLDOUT_EVERY).for_each(|&i| mask[i] = true);
    mask
}

fn split(ds: &Dataset) -> Split<'_> {
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (s, held) in ds.samples.iter().zip(holdout_mask(ds.samples.len())) {
        if held {
            holdout.push(s.cells());
        } else {
            train.push(s.cells());
        }
    }
    Split { train, holdout }
}

fn require(ds: &Dataset, sequence: bool, need: usize) -> Result<NormStats, ModelError> {
    if ds.schema.time_series() != sequence {
        return Err(ModelError::SchemaMismatch(format!(
            "family expects {} data",
            if sequence { "time-series" } else { "vector" }
        )));
    }
    let stats = ds.norm_stats.clone().ok_or(ModelError::NotCleaned)?;
    if ds.len() < need {
        return Err(ModelError::InsufficientData { have: ds.len(), need });
    }
    if let Some(bad) = ds.samples.iter().find(|s| {
        s.level() != ds.schema.level()
            || s.is_sequence() != sequence
            || s.cells().len() != ds.schema.dim() * ds.schema.seq_len().unwrap_or(1)
            || s.cells().iter().any(|v| !v.is_finite())
    }) {
        return Err(ModelError::SchemaMismatch(format!(
            "sample for {} does not fit the dataset schema",
            bad.device_id()
        )));
    }
    Ok(stats)
}

fn finish(
    spec: &ModelSpec,
    ds: &Dataset,
    stats: NormStats,
    body: Body,
    holdout: &[&[f64]],
) -> Result<TrainedModel, ModelError> {
    let mut model = TrainedModel {
        spec: spec.clone(),
        schema: ds.schema.clone(),
        norm_stats: stats,
        body,
        calibration: Calibration::new(vec![0.0]).unwrap(),
        trained_at: 0,
        version: 1,
    };
    let errors: Vec<f64> = holdout.iter().map(|x| model.raw_cells(x)).collect();
    model.calibration =
        Calibration::new(errors).ok_or(ModelError::DivergedTraining { epoch: 0, report: Box::default() })?;
    Ok(model)
}

/// Trains whichever family `spec` names.
pub fn train(ds: &Dataset, spec: &ModelSpec, seed: u64) -> Result<(TrainedModel, TrainingReport), ModelError> {
    match spec.family() {
        ModelFamily::Ocsvm => train_ocsvm(ds, spec).map(|m| (m, split_report(ds))),
        ModelFamily::Marima => train_marima(ds, spec).map(|m| (m, split_report(ds))),
        ModelFamily::GanEd => train_gan_ed(ds, spec, seed),
        ModelFamily::LstmEd => train_lstm_ed(ds, spec, seed),
    }
}

fn split_report(ds: &Dataset) -> TrainingReport {
    let holdout_samples = holdout_mask(ds.len()).into_iter().filter(|&h| h).count();
    TrainingReport { train_samples: ds.len() - holdout_samples, holdout_samples, ..Default::default() }
}

pub fn train_ocsvm(ds: &Dataset, spec: &ModelSpec) -> Result<TrainedModel, ModelError> {
    spec.validate()?;
    let ModelSpec::Ocsvm { nu, rbf_gamma } = spec else {
        return Err(ModelError::InvalidSpec("expected an OCSVM spec".into()));
    };
    let stats = require(ds, false, 50)?;
    let dim = ds.schema.dim();
    let sp = split(ds);
    let stride = sp.train.len().div_ceil(OCSVM_MAX_TRAIN);
    let points: Vec<f64> = sp.train.iter().step_by(stride).flat_map(|x| x.iter().copied()).collect();
    let gamma = rbf_gamma.unwrap_or(1.0 / dim as f64);
    let m = Ocsvm::fit(&points, dim, *nu, gamma, SolverOptions::default()).map_err(|e| match e {
        SolveError::NonConvergence { violation } => ModelError::NonConvergence { violation },
    })?;
    finish(spec, ds, stats, Body::Ocsvm(m), &sp.holdout)
}

pub fn train_marima(ds: &Dataset, spec: &ModelSpec) -> Result<TrainedModel, ModelError> {
    spec.validate()?;
    let ModelSpec::Marima { p, d } = *spec else {
        return Err(ModelError::InvalidSpec("expected a MARIMA spec".into()));
    };
    let stats = require(ds, true, HOLDOUT_EVERY)?;
    let dim = ds.schema.dim();
    let seq_len = ds.schema.seq_len().unwrap_or(0);
    let sp = split(ds);
    let rows_per = seq_len.saturating_sub(d + p);
    let usable = rows_per * sp.train.len();
    let need = 20 * p * dim;
    if rows_per == 0 || usable < need {
        return Err(ModelError::InsufficientData { have: usable, need });
    }
    let series: Vec<Vec<f64>> = sp.train.iter().map(|x| marima::difference(x, dim, d)).collect();
    let params = marima::fit_var(&series, dim, p).map_err(|_| ModelError::SingularDesign)?;
    finish(spec, ds, stats, Body::Marima(VarModel { dim, p, d, params }), &sp.holdout)
}

fn mean_of<F: Fn(&[f64]) -> f64>(xs: &[&[f64]], f: F) -> f64 {
    xs.iter().map(|x| f(x)).sum::<f64>() / xs.len().max(1) as f64
}

pub fn train_gan_ed(ds: &Dataset, spec: &ModelSpec, seed: u64) -> Result<(TrainedModel, TrainingReport), ModelError> {
    spec.validate()?;
    let ModelSpec::GanEd { layers, latent_dim, epochs, lr, batch, lambda_rec, alpha } = spec else {
        return Err(ModelError::InvalidSpec("expected a GANED spec".into()));
    };
    let stats = require(ds, false, 200)?;
    let dim = ds.schema.dim();
    if dim < 2 {
        return Err(ModelError::InsufficientData { have: dim, need: 2 });
    }
    let sp = split(ds);
    let net = GanEd::new(dim, layers, *latent_dim, *alpha);
    let mut r = rng::stream(&[seed, 0x0067_616e_6564]);
    let mut params = net.init(&mut r);
    let (er, dr) = (net.encoder_range(), net.discriminator_range());
    let ge = er.start..dr.start;
    let mut opt_d = Sgd::new(dr.len(), *lr, 0.9);
    let mut opt_ge = Sgd::new(ge.len(), *lr, 0.9);
    let mut report = TrainingReport {
        initial_holdout_error: mean_of(&sp.holdout, |x| net.reconstruction_error(&params, x)),
        epochs: Vec::with_capacity(*epochs),
        train_samples: sp.train.len(),
        holdout_samples: sp.holdout.len(),
    };
    let mut order: Vec<usize> = (0..sp.train.len()).collect();
    let mut grad = vec![0.0; params.len()];
    for epoch in 0..*epochs {
        order.shuffle(&mut r);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(*batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|i| sp.train[*i]).collect();
            let zs: Vec<Vec<f64>> = chunk.iter().map(|_| net.sample_latent(&mut r)).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            d_sum += net.discriminator_loss(&params, &xs, &zs, &mut grad);
            opt_d.step(&mut params[dr.clone()], &grad[dr.clone()]);
            grad.iter_mut().for_each(|g| *g = 0.0);
            g_sum += net.generator_loss(&params, &xs, &zs, *lambda_rec, &mut grad).0;
            opt_ge.step(&mut params[ge.clone()], &grad[ge.clone()]);
            batches += 1;
        }
        let stats = EpochStats {
            epoch,
            loss: g_sum / batches as f64,
            discriminator_loss: Some(d_sum / batches as f64),
            holdout_error: mean_of(&sp.holdout, |x| net.reconstruction_error(&params, x)),
        };
        let finite = stats.loss.is_finite() && d_sum.is_finite() && stats.holdout_error.is_finite();
        report.epochs.push(stats);
        if !finite || params.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::DivergedTraining { epoch, report: Box::new(report) });
        }
    }
    let model = finish(spec, ds, stats, Body::GanEd { net, params }, &sp.holdout)?;
    Ok((model, report))
}

pub fn train_lstm_ed(ds: &Dataset, spec: &ModelSpec, seed: u64) -> Result<(TrainedModel, TrainingReport), ModelError> {
    spec.validate()?;
    let ModelSpec::LstmEd { layers, epochs, lr, batch } = spec else {
        return Err(ModelError::InvalidSpec("expected an LSTMED spec".into()));
    };
    let stats = require(ds, true, 200)?;
    let sp = split(ds);
    let net = LstmEd::new(ds.schema.dim(), layers);
    let mut r = rng::stream(&[seed, 0x6c73_746d_6564]);
    let mut params = net.init(&mut r);
    let mut opt = Sgd::new(params.len(), *lr, 0.9);
    let mut report = TrainingReport {
        initial_holdout_error: mean_of(&sp.holdout, |x| net.raw_error(&params, x)),
        epochs: Vec::with_capacity(*epochs),
        train_samples: sp.train.len(),
        holdout_samples: sp.holdout.len(),
    };
    let mut order: Vec<usize> = (0..sp.train.len()).collect();
    let mut grad = vec![0.0; params.len()];
    for epoch in 0..*epochs {
        order.shuffle(&mut r);
        let (mut loss, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(*batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut l = 0.0;
            for i in chunk {
                l += net.loss_and_grad(&params, sp.train[*i], scale, &mut grad);
            }
            loss += l * scale;
            opt.step(&mut params, &grad);
            batches += 1;
        }
        let stats = EpochStats {
            epoch,
            loss: loss / batches as f64,
            discriminator_loss: None,
            holdout_error: mean_of(&sp.holdout, |x| net.raw_error(&params, x)),
        };
        let finite = stats.loss.is_finite() && stats.holdout_error.is_finite();
        report.epochs.push(stats);
        if !finite || params.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::DivergedTraining { epoch, report: Box::new(report) });
        }
    }
    let model = finish(spec, ds, stats, Body::LstmEd { net, params }, &sp.holdout)?;
    Ok((model, report))
}
