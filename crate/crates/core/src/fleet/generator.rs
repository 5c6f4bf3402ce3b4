//! Normal-regime signal generators and regime effects.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::BaselineConfig;
use crate::rng;

/// Deviation from the baseline applied to one emitted target.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Effect {
    /// Per-feature mean shift in units of the feature's marginal std.
    pub shift: Vec<f64>,
    /// Multiplier on the idiosyncratic noise and latent factors.
    pub noise_mult: f64,
    /// Alternating-sign burst amplitude (marginal-std units); zero disables.
    pub burst: f64,
}

impl Effect {
    pub fn none(dim: usize) -> Self {
        Self { shift: vec![0.0; dim], noise_mult: 1.0, burst: 0.0 }
    }

    pub fn is_none(&self) -> bool {
        self.noise_mult == 1.0 && self.burst == 0.0 && self.shift.iter().all(|s| *s == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub dim: usize,
    pub seq_len: Option<usize>,
    pub mean: Vec<f64>,
    /// `dim x latent` row-major.
    pub loadings: Vec<f64>,
    pub latent_dim: usize,
    pub noise_std: f64,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub period: f64,
    pub latent_ar: f64,
    pub marginal_std: Vec<f64>,
}

impl Generator {
    pub fn build(cfg: &BaselineConfig, dim: usize, seq_len: Option<usize>, key: u64) -> Self {
        let mut r = rng::stream(&[key, cfg.structure_seed, 0x6e6f726d]);
        let k = cfg.latent_dim;
        let scale = cfg.loading_scale / (k.max(1) as f64).sqrt();
        let mean = (0..dim).map(|_| r.random_range(-1.0..1.0) * cfg.mean_spread).collect();
        let loadings: Vec<f64> = (0..dim * k)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                z * scale
            })
            .collect();
        let amplitude = (0..dim).map(|_| cfg.amplitude * r.random_range(0.5..1.5)).collect();
        let phase = (0..dim).map(|_| r.random_range(0.0..cfg.period.max(1.0))).collect();
        let marginal_std = (0..dim)
            .map(|j| {
                let l2: f64 = loadings[j * k..(j + 1) * k].iter().map(|w| w * w).sum();
                (l2 + cfg.noise_std * cfg.noise_std).sqrt().max(1e-9)
            })
            .collect();
        Self {
            dim,
            seq_len,
            mean,
            loadings,
            latent_dim: k,
            noise_std: cfg.noise_std,
            amplitude,
            phase,
            period: cfg.period,
            latent_ar: cfg.latent_ar,
            marginal_std,
        }
    }

    pub fn vector<R: Rng>(&self, r: &mut R, effect: &Effect) -> Vec<f64> {
        let k = self.latent_dim;
        let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(r)).collect();
        (0..self.dim)
            .map(|j| {
                let e: f64 = StandardNormal.sample(r);
                let latent: f64 = (0..k).map(|l| self.loadings[j * k + l] * z[l]).sum();
                let burst = if effect.burst != 0.0 { alternating(j) * effect.burst } else { 0.0 };
                self.mean[j]
                    + effect.noise_mult * (latent + self.noise_std * e)
                    + (effect.shift[j] + burst) * self.marginal_std[j]
            })
            .collect()
    }

    /// `t0` is the absolute index of the first point, so consecutive
    /// sequences continue the same sinusoid.
    pub fn sequence<R: Rng>(&self, r: &mut R, t0: u64, device_phase: f64, effect: &Effect) -> Vec<f64> {
        let len = self.seq_len.expect("sequence generator");
        let k = self.latent_dim;
        let rho = self.latent_ar;
        let innov = (1.0 - rho * rho).max(0.0).sqrt();
        let mut z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(r)).collect();
        let mut out = Vec::with_capacity(len * self.dim);
        for i in 0..len {
            if i > 0 {
                for zl in z.iter_mut() {
                    let n: f64 = StandardNormal.sample(r);
                    *zl = rho * *zl + innov * n;
                }
            }
            let t = (t0 + i as u64) as f64 + device_phase;
            let burst_on = effect.burst != 0.0 && i % 8 < 2;
            for j in 0..self.dim {
                let e: f64 = StandardNormal.sample(r);
                let wave = self.amplitude[j] * (std::f64::consts::TAU * (t + self.phase[j]) / self.period).sin();
                let latent: f64 = (0..k).map(|l| self.loadings[j * k + l] * z[l]).sum();
                let burst = if burst_on { 2.0 * effect.burst } else { 0.0 };
                out.push(
                    self.mean[j]
                        + wave
                        + effect.noise_mult * (latent + self.noise_std * e)
                        + (effect.shift[j] + burst) * self.marginal_std[j],
                );
            }
        }
        out
    }
}

fn alternating(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
