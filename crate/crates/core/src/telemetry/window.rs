use super::types::{BehaviorLevel, DeviceId, SequenceSample};
use super::TelemetryError;

/// A contiguous `T x dim` series, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub device_id: DeviceId,
    pub level: BehaviorLevel,
    pub start_tick: u64,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Series {
    pub fn univariate(device_id: DeviceId, level: BehaviorLevel, values: Vec<f64>) -> Self {
        Self { device_id, level, start_tick: 0, dim: 1, data: values }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cuts `series` into overlapping windows of `win` rows, advancing `stride`
/// rows each time. Window `k` starts at row `k * stride`; its tick is
/// `start_tick + k * stride`.
pub fn windowize(series: &Series, win: usize, stride: usize) -> Result<Vec<SequenceSample>, TelemetryError> {
    if win < 2 || stride == 0 || series.dim == 0 {
        return Err(TelemetryError::InvalidArgument(format!(
            "windowize needs win >= 2 and stride >= 1 (win={win}, stride={stride})"
        )));
    }
    let t = series.len();
    if t < win {
        return Err(TelemetryError::SeriesTooShort { len: t, win });
    }
    let d = series.dim;
    let count = (t - win) / stride + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            SequenceSample {
                tick: series.start_tick + start as u64,
                device_id: series.device_id.clone(),
                level: series.level,
                seq_len: win,
                dim: d,
                data: series.data[start * d..(start + win) * d].to_vec(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(t: usize, dim: usize) -> Series {
        Series {
            device_id: DeviceId::from("s"),
            level: BehaviorLevel::B1,
            start_tick: 100,
            dim,
            data: (0..t * dim).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn ten_four_two() {
        let w = windowize(&series(10, 1), 4, 2).unwrap();
        let starts: Vec<u64> = w.iter().map(|s| s.tick - 100).collect();
        assert_eq!(starts, vec![0, 2, 4, 6]);
        assert_eq!(w[1].data, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn full_length_single_window() {
        assert_eq!(windowize(&series(90, 1), 90, 1).unwrap().len(), 1);
    }

    #[test]
    fn too_short() {
        assert!(matches!(windowize(&series(3, 1), 4, 1), Err(TelemetryError::SeriesTooShort { len: 3, win: 4 })));
    }

    proptest! {
        #[test]
        fn count_formula(t in 2usize..200, win_frac in 0.0f64..1.0, stride in 1usize..20, dim in 1usize..4) {
            let win = 2 + ((t - 2) as f64 * win_frac) as usize;
            let w = windowize(&series(t, dim), win, stride).unwrap();
            prop_assert_eq!(w.len(), (t - win) / stride + 1);
            for (k, s) in w.iter().enumerate() {
                prop_assert_eq!(s.data.len(), win * dim);
                prop_assert_eq!(s.data[0], (k * stride * dim) as f64);
            }
        }
    }
}
