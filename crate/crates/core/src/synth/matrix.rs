use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::models::AnomalyScore;
use crate::telemetry::{BehaviorLevel, DeviceId};

pub const DEFAULT_WINDOW: u64 = 30;

/// One scored sample, as recorded by the observe phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub tick: u64,
    pub device_id: DeviceId,
    pub level: BehaviorLevel,
    pub score: AnomalyScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    /// No score for this device-level inside the window.
    Absent,
    Present {
        current: f64,
        recent_mean: f64,
        recent_max: f64,
    },
}

impl Cell {
    pub fn current(&self) -> Option<f64> {
        match self {
            Cell::Present { current, .. } => Some(*current),
            Cell::Absent => None,
        }
    }

    pub fn is_present(&self) -> bool {
        matches!(self, Cell::Present { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub tick: u64,
    pub window: u64,
    pub rows: BTreeMap<DeviceId, BTreeMap<BehaviorLevel, Cell>>,
}

/// Aggregates the records falling in `(tick - window, tick]`. Every
/// registered device-level gets a cell; records for unregistered pairs are
/// ignored.
pub fn build_score_matrix<'a, I>(
    tick: u64,
    records: I,
    registered: &BTreeMap<DeviceId, Vec<BehaviorLevel>>,
    window: u64,
) -> ScoreMatrix
where
    I: IntoIterator<Item = &'a ScoreRecord>,
{
    let lo = tick.saturating_sub(window.saturating_sub(1));
    // (latest tick, latest value, sum, count, max)
    type Acc = (u64, f64, f64, usize, f64);
    let mut acc: BTreeMap<(&DeviceId, BehaviorLevel), Acc> = BTreeMap::new();
    for r in records {
        if r.tick < lo || r.tick > tick {
            continue;
        }
        let v = r.score.value;
        let e = acc.entry((&r.device_id, r.level)).or_insert((r.tick, v, 0.0, 0, f64::NEG_INFINITY));
        if r.tick >= e.0 {
            e.0 = r.tick;
            e.1 = v;
        }
        e.2 += v;
        e.3 += 1;
        e.4 = e.4.max(v);
    }
    let rows = registered
        .iter()
        .map(|(id, levels)| {
            let cells = levels
                .iter()
                .map(|lvl| {
                    let cell = match acc.get(&(id, *lvl)) {
                        Some(&(_, current, sum, n, max)) => {
                            Cell::Present { current, recent_mean: sum / n as f64, recent_max: max }
                        }
                        None => Cell::Absent,
                    };
                    (*lvl, cell)
                })
                .collect();
            (id.clone(), cells)
        })
        .collect();
    ScoreMatrix { tick, window, rows }
}

impl ScoreMatrix {
    pub fn populated_count(&self) -> usize {
        self.rows.values().flat_map(|c| c.values()).filter(|c| c.is_present()).count()
    }

    pub fn cell(&self, device: &DeviceId, level: BehaviorLevel) -> Option<&Cell> {
        self.rows.get(device).and_then(|r| r.get(&level))
    }

    /// Current scores of every present cell.
    pub fn current_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.values().flat_map(|c| c.values()).filter_map(|c| c.current())
    }

    /// Levels with a present cell, in order.
    pub fn signature(&self, device: &DeviceId) -> Vec<BehaviorLevel> {
        self.rows
            .get(device)
            .map(|r| r.iter().filter(|(_, c)| c.is_present()).map(|(l, _)| *l).collect())
            .unwrap_or_default()
    }

    /// `[current, recent_mean, recent_max]` for each present level.
    pub fn features(&self, device: &DeviceId) -> Vec<f64> {
        let mut f = Vec::new();
        if let Some(r) = self.rows.get(device) {
            for c in r.values() {
                if let Cell::Present { current, recent_mean, recent_max } = c {
                    f.extend([*current, *recent_mean, *recent_max]);
                }
            }
        }
        f
    }
}
