//! Portmanteau test used to advise whether a behavior target looks time dependent.

use super::types::{Dataset, Sample};
use super::TelemetryError;

/// Upper 5% points of the chi-square distribution, df = 1..=20.
const CHI2_95: [f64; 20] = [
    3.841459, 5.991465, 7.814728, 9.487729, 11.070498, 12.591587, 14.067140, 15.507313, 16.918978, 18.307038,
    19.675138, 21.026070, 22.362032, 23.684791, 24.995790, 26.296228, 27.587112, 28.869299, 30.143527, 31.410433,
];

pub const MAX_TABLE_LAG: usize = CHI2_95.len();

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDependency {
    pub score: f64,
    pub dependent: bool,
}

/// Ljung-Box Q over lags `1..=max_lag`.
pub fn ljung_box(series: &[f64], max_lag: usize) -> Result<TimeDependency, TelemetryError> {
    if max_lag == 0 || max_lag > MAX_TABLE_LAG {
        return Err(TelemetryError::InvalidArgument(format!("max_lag must be in 1..={MAX_TABLE_LAG}")));
    }
    let n = series.len();
    if n < 10 * max_lag {
        return Err(TelemetryError::TooFewPoints { have: n, need: 10 * max_lag });
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let denom: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom <= 1e-12 * nf * mean.abs().max(1.0).powi(2) {
        return Ok(TimeDependency { score: 0.0, dependent: false });
    }
    let mut q = 0.0;
    for k in 1..=max_lag {
        let num: f64 = (k..n).map(|t| (series[t] - mean) * (series[t - k] - mean)).sum();
        let rho = num / denom;
        q += rho * rho / (nf - k as f64);
    }
    q *= nf * (nf + 2.0);
    Ok(TimeDependency { score: q, dependent: q > CHI2_95[max_lag - 1] })
}

/// Runs [`ljung_box`] on the first feature of the dataset, with samples
/// concatenated in order.
pub fn time_dependency_score(ds: &Dataset, max_lag: usize) -> Result<TimeDependency, TelemetryError> {
    let dim = ds.schema.dim();
    let mut first = Vec::new();
    for s in &ds.samples {
        match s {
            Sample::Vector(v) => first.push(v.values[0]),
            Sample::Sequence(q) => first.extend((0..q.seq_len).map(|t| q.data[t * dim])),
        }
    }
    ljung_box(&first, max_lag)
}
