//! Per-subsystem resource usage forecasting with a single-layer LSTM
//! regressor and recursive multi-step prediction.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::models::nn::{dot, glorot, LstmCell, Sgd};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastSpec {
    pub width: usize,
    /// Input window in ticks.
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Ticks between retrainings.
    pub retrain_every: u64,
    /// Trailing history kept and trained on.
    pub max_history: usize,
    /// Stride between training windows.
    pub stride: usize,
}

impl Default for ForecastSpec {
    fn default() -> Self {
        Self { width: 32, window: 30, epochs: 30, lr: 0.05, batch: 16, retrain_every: 360, max_history: 720, stride: 2 }
    }
}

impl ForecastSpec {
    pub fn min_history(&self) -> usize {
        10 * self.window
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageForecast {
    pub subsystem: String,
    pub horizon: usize,
    pub predicted: Vec<f64>,
    pub model_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageModel {
    pub width: usize,
    pub window: usize,
    pub mean: f64,
    pub std: f64,
    /// Empty for a constant series, which forecasts its mean.
    pub params: Vec<f64>,
    pub version: u32,
}

fn cell(width: usize) -> LstmCell {
    LstmCell { input: 1, hidden: width }
}

impl UsageModel {
    fn out_offset(&self) -> usize {
        cell(self.width).param_count()
    }

    fn predict_norm(&self, xs: &[f64]) -> f64 {
        let c = cell(self.width);
        let n = c.param_count();
        let (mut h, mut s) = (vec![0.0; self.width], vec![0.0; self.width]);
        for x in xs {
            let st = c.forward(&self.params[..n], &[*x], &h, &s);
            h = st.h;
            s = st.c;
        }
        let o = self.out_offset();
        self.params[o + self.width] + dot(&self.params[o..o + self.width], &h)
    }

    fn loss_and_grad(&self, xs: &[f64], target: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let c = cell(self.width);
        let n = c.param_count();
        let (mut h, mut s) = (vec![0.0; self.width], vec![0.0; self.width]);
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let st = c.forward(&self.params[..n], &[*x], &h, &s);
            h.clone_from(&st.h);
            s.clone_from(&st.c);
            steps.push(st);
        }
        let o = self.out_offset();
        let y = self.params[o + self.width] + dot(&self.params[o..o + self.width], &h);
        let err = y - target;
        let dy = 2.0 * err * scale;
        let mut dh: Vec<f64> = self.params[o..o + self.width].iter().map(|w| w * dy).collect();
        for (u, hv) in h.iter().enumerate() {
            grad[o + u] += dy * hv;
        }
        grad[o + self.width] += dy;
        let mut dc = vec![0.0; self.width];
        for st in steps.iter().rev() {
            let (_, dhp, dcp) = c.backward(&self.params[..n], st, &dh, &dc, &mut grad[..n]);
            dh = dhp;
            dc = dcp;
        }
        err * err
    }

    pub fn fit(history: &[f64], spec: &ForecastSpec, seed: u64, version: u32) -> Result<Self, SynthError> {
        let need = spec.min_history();
        if history.len() < need || spec.window == 0 {
            return Err(SynthError::InsufficientHistory { have: history.len(), need });
        }
        let tail = &history[history.len().saturating_sub(spec.max_history.max(need))..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let std = (tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tail.len() as f64).sqrt();
        let mut model = Self { width: spec.width, window: spec.window, mean, std, params: Vec::new(), version };
        if std <= 1e-9 * mean.abs().max(1.0) {
            model.std = 0.0;
            return Ok(model);
        }
        let z: Vec<f64> = tail.iter().map(|v| (v - mean) / std).collect();
        let mut r = rng::stream(&[seed, version as u64, 0x0075_7361_6765]);
        let c = cell(spec.width);
        let mut params = vec![0.0; c.param_count() + spec.width + 1];
        c.init(&mut r, &mut params[..c.param_count()]);
        let o = c.param_count();
        glorot(&mut r, &mut params[o..o + spec.width], spec.width, 1);
        model.params = params;
        let starts: Vec<usize> = (spec.window..z.len()).step_by(spec.stride.max(1)).collect();
        let mut order = starts.clone();
        let mut opt = Sgd::new(model.params.len(), spec.lr, 0.9);
        let mut grad = vec![0.0; model.params.len()];
        for _ in 0..spec.epochs {
            order.shuffle(&mut r);
            for chunk in order.chunks(spec.batch.max(1)) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                for &t in chunk {
                    model.loss_and_grad(&z[t - spec.window..t], z[t], scale, &mut grad);
                }
                opt.step(&mut model.params, &grad);
            }
        }
        if model.params.iter().any(|v| !v.is_finite()) {
            // Fall back to the mean forecast rather than emit garbage.
            model.params.clear();
            model.std = 0.0;
        }
        Ok(model)
    }

    /// Recursive forecast from the most recent values; outputs clamped at 0.
    pub fn forecast(&self, recent: &[f64], horizon: usize) -> Vec<f64> {
        if self.params.is_empty() {
            return vec![self.mean.max(0.0); horizon];
        }
        let start = recent.len().saturating_sub(self.window);
        let mut buf: Vec<f64> = recent[start..].iter().map(|v| (v - self.mean) / self.std).collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let y = self.predict_norm(&buf[buf.len().saturating_sub(self.window)..]);
            buf.push(y);
            out.push((y * self.std + self.mean).max(0.0));
        }
        out
    }
}

pub fn forecast_usage(
    subsystem: &str,
    history: &[f64],
    horizon: usize,
    spec: &ForecastSpec,
    seed: u64,
) -> Result<UsageForecast, SynthError> {
    let model = UsageModel::fit(history, spec, seed, 1)?;
    Ok(UsageForecast {
        subsystem: subsystem.to_owned(),
        horizon,
        predicted: model.forecast(history, horizon),
        model_version: model.version,
    })
}

/// Online wrapper: keeps trailing history and retrains on a fixed cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageForecaster {
    pub subsystem: String,
    pub spec: ForecastSpec,
    pub seed: u64,
    history: VecDeque<f64>,
    model: Option<UsageModel>,
    last_trained: Option<u64>,
}

impl UsageForecaster {
    pub fn new(subsystem: &str, spec: ForecastSpec, seed: u64) -> Self {
        Self { subsystem: subsystem.to_owned(), spec, seed, history: VecDeque::new(), model: None, last_trained: None }
    }

    pub fn observe(&mut self, usage: f64) {
        self.history.push_back(usage);
        while self.history.len() > self.spec.max_history.max(self.spec.min_history()) {
            self.history.pop_front();
        }
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn model_version(&self) -> u32 {
        self.model.as_ref().map_or(0, |m| m.version)
    }

    /// Retrains when due. Before enough history exists the forecast repeats
    /// the latest observation and reports model version 0.
    pub fn forecast(&mut self, tick: u64, horizon: usize) -> UsageForecast {
        let due = match self.last_trained {
            None => true,
            Some(t) => tick.saturating_sub(t) >= self.spec.retrain_every,
        };
        if due && self.history.len() >= self.spec.min_history() {
            let hist: Vec<f64> = self.history.iter().copied().collect();
            let version = self.model_version() + 1;
            if let Ok(m) = UsageModel::fit(&hist, &self.spec, self.seed, version) {
                self.model = Some(m);
                self.last_trained = Some(tick);
            }
        }
        let predicted = match &self.model {
            Some(m) => {
                let hist: Vec<f64> = self.history.iter().copied().collect();
                m.forecast(&hist, horizon)
            }
            None => vec![self.history.back().copied().unwrap_or(0.0).max(0.0); horizon],
        };
        UsageForecast { subsystem: self.subsystem.clone(), horizon, predicted, model_version: self.model_version() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_forecasts_constant() {
        let hist = vec![4.2; 400];
        let f = forecast_usage("s", &hist, 20, &ForecastSpec::default(), 1).unwrap();
        assert_eq!(f.predicted.len(), 20);
        assert!(f.predicted.iter().all(|v| (v - 4.2).abs() <= 0.05 * 4.2));
    }

    #[test]
    fn periodic_demand_tracked() {
        let amp = 3.0;
        let series = |t: usize| 10.0 + amp * (std::f64::consts::TAU * t as f64 / 60.0).sin();
        let hist: Vec<f64> = (0..600).map(series).collect();
        let f = forecast_usage("s", &hist, 60, &ForecastSpec::default(), 1).unwrap();
        let mse = f.predicted.iter().enumerate().map(|(h, v)| (v - series(600 + h)).powi(2)).sum::<f64>() / 60.0;
        assert!(mse.sqrt() <= 0.15 * amp, "rmse {}", mse.sqrt());
    }

    #[test]
    fn short_history_rejected() {
        let err = forecast_usage("s", &[1.0; 5], 10, &ForecastSpec::default(), 1).unwrap_err();
        assert!(matches!(err, SynthError::InsufficientHistory { have: 5, need: 300 }));
    }

    #[test]
    fn online_fallback_then_versioned() {
        let spec = ForecastSpec { epochs: 2, ..Default::default() };
        let mut f = UsageForecaster::new("s", spec, 3);
        f.observe(2.0);
        let early = f.forecast(0, 3);
        assert_eq!((early.predicted, early.model_version), (vec![2.0; 3], 0));
        for t in 0..300 {
            f.observe(2.0 + (t as f64 / 9.0).sin());
        }
        assert_eq!(f.forecast(301, 5).model_version, 1);
        assert_eq!(f.forecast(302, 5).model_version, 1);
        assert_eq!(f.forecast(661, 5).model_version, 2);
    }
}
