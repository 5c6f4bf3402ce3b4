//! Ingress validation, imputation and z-score normalization.

use serde::{Deserialize, Serialize};

use super::types::{Dataset, FeatureSchema, NormStats, Sample};
use super::TelemetryError;

pub const DEFAULT_MISSING_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    DimMismatch,
    TooManyMissing,
    BadLevel,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DimMismatch => "dim_mismatch",
            Self::TooManyMissing => "too_many_missing",
            Self::BadLevel => "bad_level",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    Ok,
    Reject(RejectReason),
}

impl Validation {
    pub fn is_ok(self) -> bool {
        matches!(self, Validation::Ok)
    }
}

pub fn validate_sample(sample: &Sample, schema: &FeatureSchema, missing_limit: f64) -> Validation {
    let dims_ok = match (sample, schema.seq_len()) {
        (Sample::Vector(v), None) => v.values.len() == schema.dim(),
        (Sample::Sequence(s), Some(len)) => {
            s.seq_len == len && s.dim == schema.dim() && s.data.len() == len * schema.dim()
        }
        _ => false,
    };
    if !dims_ok {
        return Validation::Reject(RejectReason::DimMismatch);
    }
    if sample.level() != schema.level() {
        return Validation::Reject(RejectReason::BadLevel);
    }
    let cells = sample.cells();
    let missing = cells.iter().filter(|v| !v.is_finite()).count();
    if missing as f64 > missing_limit * cells.len() as f64 {
        return Validation::Reject(RejectReason::TooManyMissing);
    }
    Validation::Ok
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub imputed_cells: usize,
    pub dropped_samples: usize,
    pub rejections: Vec<(usize, RejectReason)>,
}

/// Validates, imputes and normalizes a dataset.
///
/// If the dataset carries no `norm_stats`, statistics are fitted on the
/// imputed samples and stored. A dataset that already carries statistics is
/// treated as normalized and only imputed, which makes the operation
/// idempotent.
pub fn clean_dataset(ds: &Dataset, missing_limit: f64) -> Result<(Dataset, CleanReport), TelemetryError> {
    if ds.is_empty() {
        return Err(TelemetryError::EmptyDataset);
    }
    let (mut kept, mut report) = retain_valid(ds, missing_limit)?;
    match &ds.norm_stats {
        Some(stats) => {
            report.imputed_cells = impute_all(&mut kept, &ds.schema, &stats.median);
            Ok((Dataset { schema: ds.schema.clone(), samples: kept, norm_stats: Some(stats.clone()) }, report))
        }
        None => {
            let medians = feature_medians(&kept, ds.schema.dim());
            report.imputed_cells = impute_all(&mut kept, &ds.schema, &medians);
            let stats = fit_stats(&kept, ds.schema.dim(), medians);
            for s in &mut kept {
                apply_stats(s, &stats);
            }
            Ok((Dataset { schema: ds.schema.clone(), samples: kept, norm_stats: Some(stats) }, report))
        }
    }
}

/// Cleans a raw batch with statistics fitted elsewhere (typically on the
/// training set). The statistics are copied verbatim into the result.
pub fn clean_with_stats(
    ds: &Dataset,
    stats: &NormStats,
    missing_limit: f64,
) -> Result<(Dataset, CleanReport), TelemetryError> {
    if ds.is_empty() {
        return Err(TelemetryError::EmptyDataset);
    }
    if stats.dim() != ds.schema.dim() {
        return Err(TelemetryError::InvalidSchema("norm stats dimension differs from schema".into()));
    }
    let (mut kept, mut report) = retain_valid(ds, missing_limit)?;
    report.imputed_cells = impute_all(&mut kept, &ds.schema, &stats.median);
    for s in &mut kept {
        apply_stats(s, stats);
    }
    Ok((Dataset { schema: ds.schema.clone(), samples: kept, norm_stats: Some(stats.clone()) }, report))
}

/// Single-sample version of [`clean_with_stats`], used on the scoring path.
pub fn prepare_sample(
    sample: &Sample,
    schema: &FeatureSchema,
    stats: &NormStats,
    missing_limit: f64,
) -> Result<Sample, RejectReason> {
    if let Validation::Reject(r) = validate_sample(sample, schema, missing_limit) {
        return Err(r);
    }
    let mut s = sample.clone();
    impute_sample(&mut s, &stats.median);
    apply_stats(&mut s, stats);
    Ok(s)
}

fn retain_valid(ds: &Dataset, missing_limit: f64) -> Result<(Vec<Sample>, CleanReport), TelemetryError> {
    let mut report = CleanReport::default();
    let mut kept = Vec::with_capacity(ds.samples.len());
    for (i, s) in ds.samples.iter().enumerate() {
        match validate_sample(s, &ds.schema, missing_limit) {
            Validation::Ok => kept.push(s.clone()),
            Validation::Reject(r) => {
                report.dropped_samples += 1;
                report.rejections.push((i, r));
            }
        }
    }
    if kept.is_empty() {
        return Err(TelemetryError::EmptyAfterCleaning);
    }
    Ok((kept, report))
}

fn impute_all(samples: &mut [Sample], _schema: &FeatureSchema, medians: &[f64]) -> usize {
    samples.iter_mut().map(|s| impute_sample(s, medians)).sum()
}

/// Returns the number of cells filled in.
fn impute_sample(sample: &mut Sample, medians: &[f64]) -> usize {
    match sample {
        Sample::Vector(v) => {
            let mut n = 0;
            for (x, m) in v.values.iter_mut().zip(medians) {
                if !x.is_finite() {
                    *x = *m;
                    n += 1;
                }
            }
            n
        }
        Sample::Sequence(s) => {
            let (len, dim) = (s.seq_len, s.dim);
            let mut n = 0;
            let mut column = vec![0.0; len];
            for (j, &median) in medians.iter().enumerate().take(dim) {
                for (t, c) in column.iter_mut().enumerate() {
                    *c = s.data[t * dim + j];
                }
                n += interpolate_column(&mut column, median);
                for (t, c) in column.iter().enumerate() {
                    s.data[t * dim + j] = *c;
                }
            }
            n
        }
    }
}

/// Linear interpolation over interior gaps; edge gaps copy the nearest
/// finite value and an all-missing column takes `fallback`.
pub(crate) fn interpolate_column(col: &mut [f64], fallback: f64) -> usize {
    let missing = col.iter().filter(|v| !v.is_finite()).count();
    if missing == 0 {
        return 0;
    }
    let finite: Vec<usize> = (0..col.len()).filter(|&t| col[t].is_finite()).collect();
    if finite.is_empty() {
        col.iter_mut().for_each(|v| *v = fallback);
        return missing;
    }
    let first = finite[0];
    let last = *finite.last().unwrap();
    for t in 0..first {
        col[t] = col[first];
    }
    for t in last + 1..col.len() {
        col[t] = col[last];
    }
    for w in finite.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a + 1 {
            let (va, vb) = (col[a], col[b]);
            for (t, v) in col.iter_mut().enumerate().take(b).skip(a + 1) {
                let frac = (t - a) as f64 / (b - a) as f64;
                *v = va + (vb - va) * frac;
            }
        }
    }
    missing
}

fn feature_medians(samples: &[Sample], dim: usize) -> Vec<f64> {
    let mut per_feature: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for s in samples {
        for (i, v) in s.cells().iter().enumerate() {
            if v.is_finite() {
                per_feature[i % dim].push(*v);
            }
        }
    }
    per_feature.into_iter().map(|mut xs| median(&mut xs)).collect()
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn fit_stats(samples: &[Sample], dim: usize, median: Vec<f64>) -> NormStats {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for s in samples {
        for (i, v) in s.cells().iter().enumerate() {
            sum[i % dim] += v;
        }
        count += s.cells().len() / dim;
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut ss = vec![0.0; dim];
    for s in samples {
        for (i, v) in s.cells().iter().enumerate() {
            let d = v - mean[i % dim];
            ss[i % dim] += d * d;
        }
    }
    let std = ss
        .iter()
        .zip(&mean)
        .map(|(s, m)| {
            let sd = (s / n).sqrt();
            // Rounding noise on a constant column is not variance.
            if sd <= 1e-12 * m.abs().max(1.0) {
                0.0
            } else {
                sd
            }
        })
        .collect();
    NormStats { mean, std, median }
}

fn apply_stats(sample: &mut Sample, stats: &NormStats) {
    let dim = stats.dim();
    for (i, v) in sample.cells_mut().iter_mut().enumerate() {
        *v = stats.normalize(i % dim, *v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{BehaviorLevel, DeviceId, SequenceSample, TelemetrySample};

    fn vec_sample(values: Vec<f64>) -> Sample {
        Sample::Vector(TelemetrySample { tick: 0, device_id: DeviceId::from("d"), level: BehaviorLevel::B1, values })
    }

    fn seq_sample(data: Vec<f64>) -> Sample {
        let len = data.len();
        Sample::Sequence(SequenceSample {
            tick: 0,
            device_id: DeviceId::from("d"),
            level: BehaviorLevel::B1,
            seq_len: len,
            dim: 1,
            data,
        })
    }

    #[test]
    fn eighty_finite_features_pass() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 80, None).unwrap();
        let s = vec_sample(vec![1.0; 80]);
        assert_eq!(validate_sample(&s, &schema, DEFAULT_MISSING_LIMIT), Validation::Ok);
    }

    #[test]
    fn short_vector_is_dim_mismatch() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 80, None).unwrap();
        let s = vec_sample(vec![1.0; 79]);
        assert_eq!(validate_sample(&s, &schema, DEFAULT_MISSING_LIMIT), Validation::Reject(RejectReason::DimMismatch));
    }

    #[test]
    fn thirty_percent_missing_rejected() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 10, None).unwrap();
        let mut v = vec![1.0; 10];
        v[0] = f64::NAN;
        v[4] = f64::NAN;
        v[7] = f64::INFINITY;
        assert_eq!(validate_sample(&vec_sample(v), &schema, 0.2), Validation::Reject(RejectReason::TooManyMissing));
    }

    #[test]
    fn wrong_level_rejected() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B2, 3, None).unwrap();
        assert_eq!(
            validate_sample(&vec_sample(vec![0.0; 3]), &schema, 0.2),
            Validation::Reject(RejectReason::BadLevel)
        );
    }

    #[test]
    fn interior_gap_interpolated() {
        let mut col = vec![1.0, f64::NAN, 3.0];
        assert_eq!(interpolate_column(&mut col, 0.0), 1);
        assert_eq!(col, vec![1.0, 2.0, 3.0]);

        let mut edges = vec![f64::NAN, 2.0, f64::NAN, f64::NAN, 8.0, f64::NAN];
        interpolate_column(&mut edges, 0.0);
        assert_eq!(edges, vec![2.0, 2.0, 4.0, 6.0, 8.0, 8.0]);
    }

    #[test]
    fn sequence_midpoint_before_normalization() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 1, Some(3)).unwrap();
        let ds = Dataset::new(schema, vec![seq_sample(vec![1.0, f64::NAN, 3.0]), seq_sample(vec![1.0, 2.0, 3.0])]);
        let (clean, report) = clean_dataset(&ds, 0.5).unwrap();
        assert_eq!(report.imputed_cells, 1);
        // Both sequences are [1,2,3] before z-scoring, so they stay equal.
        assert_eq!(clean.samples[0], clean.samples[1]);
        let stats = clean.norm_stats.unwrap();
        assert!((stats.mean[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 2, None).unwrap();
        let samples = (0..20).map(|i| vec_sample(vec![0.1 * 3.0, i as f64])).collect();
        let (clean, _) = clean_dataset(&Dataset::new(schema, samples), 0.2).unwrap();
        assert!(clean.samples.iter().all(|s| s.cells()[0] == 0.0));
        assert_eq!(clean.norm_stats.unwrap().std[0], 0.0);
    }

    #[test]
    fn vector_gaps_take_median() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 1, None).unwrap();
        let samples =
            vec![vec_sample(vec![1.0]), vec_sample(vec![5.0]), vec_sample(vec![3.0]), vec_sample(vec![f64::NAN])];
        let (clean, report) = clean_dataset(&Dataset::new(schema, samples), 1.0).unwrap();
        assert_eq!(report.imputed_cells, 1);
        let stats = clean.norm_stats.unwrap();
        assert_eq!(stats.median[0], 3.0);
        // Imputed cell equals the median, which equals the mean here.
        assert_eq!(clean.samples[3].cells()[0], 0.0);
    }

    #[test]
    fn all_dropped_is_error() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 2, None).unwrap();
        let ds = Dataset::new(schema, vec![vec_sample(vec![1.0])]);
        assert!(matches!(clean_dataset(&ds, 0.2), Err(TelemetryError::EmptyAfterCleaning)));
        let empty = Dataset::new(ds.schema.clone(), vec![]);
        assert!(matches!(clean_dataset(&empty, 0.2), Err(TelemetryError::EmptyDataset)));
    }

    #[test]
    fn stored_stats_reused_verbatim() {
        let schema = FeatureSchema::anonymous(BehaviorLevel::B1, 2, None).unwrap();
        let train = (0..30).map(|i| vec_sample(vec![i as f64, (i * i) as f64])).collect();
        let (train, _) = clean_dataset(&Dataset::new(schema.clone(), train), 0.2).unwrap();
        let stats = train.norm_stats.clone().unwrap();
        let batch = Dataset::new(schema, vec![vec_sample(vec![100.0, f64::NAN]), vec_sample(vec![-5.0, 3.0])]);
        let (scored, _) = clean_with_stats(&batch, &stats, 0.5).unwrap();
        assert_eq!(scored.norm_stats.as_ref(), Some(&stats));
        let expected = (100.0 - stats.mean[0]) / stats.std[0];
        assert_eq!(scored.samples[0].cells()[0], expected);
        assert_eq!(scored.samples[0].cells()[1], stats.normalize(1, stats.median[1]));
    }
}
