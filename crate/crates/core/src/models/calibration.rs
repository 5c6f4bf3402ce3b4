use serde::{Deserialize, Serialize};

/// Sorted raw errors of held-out normal data. Maps a raw error to its
/// empirical percentile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    sorted: Vec<f64>,
}

impl Calibration {
    /// `None` when `errors` is empty or holds a non-finite value.
    pub fn new(mut errors: Vec<f64>) -> Option<Self> {
        if errors.is_empty() || errors.iter().any(|e| !e.is_finite()) {
            return None;
        }
        errors.sort_by(f64::total_cmp);
        Some(Self { sorted: errors })
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Order statistic `i` (0-based) sits at position `(i + 1) / (n + 1)`,
    /// so a fresh exchangeable error exceeds the point at `t` with
    /// probability `1 - t`. Values between neighbours are interpolated
    /// linearly and a run of ties maps to the middle of its positions.
    pub fn percentile(&self, raw: f64) -> f64 {
        let s = &self.sorted;
        let n = s.len();
        if raw.is_nan() {
            return 1.0;
        }
        if raw < s[0] {
            return 0.0;
        }
        if raw > s[n - 1] {
            return 1.0;
        }
        let lo = s.partition_point(|v| *v < raw);
        let hi = s.partition_point(|v| *v <= raw);
        let slots = (n + 1) as f64;
        if hi > lo {
            return ((lo + 1 + hi) as f64 / 2.0) / slots;
        }
        let (a, b) = (s[lo - 1], s[lo]);
        (lo as f64 + (raw - a) / (b - a)) / slots
    }
}
