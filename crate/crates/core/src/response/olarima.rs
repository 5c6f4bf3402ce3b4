//! Online ARIMA: recursive least squares over a differenced lag regression,
//! one update per observed score.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ResponseError;
use crate::telemetry::{BehaviorLevel, DeviceId};

pub const INITIAL_COVARIANCE: f64 = 1e6;
/// Updates beyond `p + d` before forecasts are issued.
pub const WARM_UP_MARGIN: usize = 25;
/// Consecutive observations kept for the sustained-alarm rule.
pub const RECENT_DEPTH: usize = 5;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlArimaState {
    pub device_id: DeviceId,
    pub level: BehaviorLevel,
    pub p: usize,
    pub d: usize,
    /// `[intercept, phi_1..phi_p]`. The intercept stays 0 when `d > 0`, so a
    /// differenced model carries no deterministic trend.
    pub coefficients: Vec<f64>,
    /// Row-major inverse information matrix, `(p + 1)^2`.
    pub covariance: Vec<f64>,
    pub forgetting: f64,
    /// Last `p + d` raw observations, oldest first.
    pub lags: VecDeque<f64>,
    pub recent: VecDeque<f64>,
    pub n_updates: usize,
    residual_sq: f64,
    residual_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorForecast {
    pub forecast: Vec<f64>,
    pub half_width: Vec<f64>,
}

/// `d`-th differences of `xs`, oldest first.
fn differenced(xs: &[f64], d: usize) -> Vec<f64> {
    let mut v = xs.to_vec();
    for _ in 0..d {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    v
}

impl OlArimaState {
    pub fn new(device_id: DeviceId, level: BehaviorLevel, p: usize, d: usize) -> Self {
        let k = p + 1;
        let mut covariance = vec![0.0; k * k];
        for i in 0..k {
            covariance[i * k + i] = INITIAL_COVARIANCE;
        }
        Self {
            device_id,
            level,
            p,
            d,
            coefficients: vec![0.0; k],
            covariance,
            forgetting: 1.0,
            lags: VecDeque::with_capacity(p + d),
            recent: VecDeque::with_capacity(RECENT_DEPTH),
            n_updates: 0,
            residual_sq: 0.0,
            residual_n: 0,
        }
    }

    pub fn warmed_up(&self) -> bool {
        self.n_updates >= self.p + self.d + WARM_UP_MARGIN
    }

    pub fn last(&self) -> Option<f64> {
        self.recent.back().copied()
    }

    /// Residual variance of one-step predictions seen so far.
    pub fn residual_variance(&self) -> f64 {
        if self.residual_n == 0 {
            0.0
        } else {
            self.residual_sq / self.residual_n as f64
        }
    }

    /// Whether the last `RECENT_DEPTH` observations all reach `threshold`.
    pub fn sustained_at(&self, threshold: f64) -> bool {
        self.recent.len() == RECENT_DEPTH && self.recent.iter().all(|v| *v >= threshold)
    }

    pub fn update(&mut self, obs: f64) {
        let need = self.p + self.d;
        if self.lags.len() == need {
            let mut raw: Vec<f64> = self.lags.iter().copied().collect();
            raw.push(obs);
            let w = differenced(&raw, self.d);
            let target = w[self.p];
            let mut x = Vec::with_capacity(self.p + 1);
            x.push(if self.d == 0 { 1.0 } else { 0.0 });
            x.extend((1..=self.p).map(|i| w[self.p - i]));
            self.rls(&x, target);
        }
        self.lags.push_back(obs);
        if self.lags.len() > need {
            self.lags.pop_front();
        }
        self.recent.push_back(obs);
        if self.recent.len() > RECENT_DEPTH {
            self.recent.pop_front();
        }
        self.n_updates += 1;
    }

    fn rls(&mut self, x: &[f64], target: f64) {
        let k = x.len();
        let lam = self.forgetting;
        let px: Vec<f64> = (0..k).map(|i| (0..k).map(|j| self.covariance[i * k + j] * x[j]).sum()).collect();
        let denom = lam + x.iter().zip(&px).map(|(a, b)| a * b).sum::<f64>();
        let err = target - x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>();
        if self.n_updates >= self.p + self.d + WARM_UP_MARGIN {
            self.residual_sq += err * err;
            self.residual_n += 1;
        }
        for (c, p) in self.coefficients.iter_mut().zip(&px) {
            *c += p / denom * err;
        }
        // P <- (P - P x x' P / denom) / lambda, kept symmetric
        for i in 0..k {
            for j in i..k {
                let v = (self.covariance[i * k + j] - px[i] * px[j] / denom) / lam;
                self.covariance[i * k + j] = v;
                self.covariance[j * k + i] = v;
            }
        }
    }

    /// AR coefficients of the undifferenced series: `phi(B) (1 - B)^d`.
    fn expanded_ar(&self) -> Vec<f64> {
        // polynomial 1 - sum a_i B^i as coefficient list
        let mut poly = vec![1.0];
        poly.extend(self.coefficients[1..].iter().map(|c| -c));
        for _ in 0..self.d {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c;
            }
            poly = next;
        }
        poly[1..].iter().map(|c| -c).collect()
    }

    pub fn predict(&self, horizon: usize) -> Result<BehaviorForecast, ResponseError> {
        if !self.warmed_up() {
            return Err(ResponseError::NotWarmedUp { have: self.n_updates, need: self.p + self.d + WARM_UP_MARGIN });
        }
        let raw: Vec<f64> = self.lags.iter().copied().collect();
        // last value of each difference order 0..d-1, then the d-th differences
        let mut tails: Vec<f64> = (0..self.d).map(|k| *differenced(&raw, k).last().unwrap()).collect();
        let mut w = differenced(&raw, self.d);
        let mut forecast = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let n = w.len();
            let next = self.coefficients[0] + (1..=self.p).map(|i| self.coefficients[i] * w[n - i]).sum::<f64>();
            w.push(next);
            let mut level = next;
            for t in tails.iter_mut().rev() {
                *t += level;
                level = *t;
            }
            forecast.push(level.clamp(0.0, 1.0));
        }
        let a = self.expanded_ar();
        let mut psi = vec![1.0];
        for j in 1..horizon {
            let v = (1..=j.min(a.len())).map(|i| a[i - 1] * psi[j - i]).sum();
            psi.push(v);
        }
        let sigma2 = self.residual_variance();
        let mut acc = 0.0;
        let half_width = psi
            .iter()
            .take(horizon)
            .map(|p| {
                acc += p * p;
                Z95 * (sigma2 * acc).sqrt()
            })
            .collect();
        Ok(BehaviorForecast { forecast, half_width })
    }
}
