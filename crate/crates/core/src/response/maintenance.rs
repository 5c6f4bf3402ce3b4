use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::olarima::OlArimaState;
use crate::synth::OutlierReport;
use crate::telemetry::{BehaviorLevel, DeviceId};

pub const DEFAULT_MAINTENANCE_WINDOW: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaintenanceReason {
    ForecastCrossing,
    SustainedAlarm,
}

impl MaintenanceReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ForecastCrossing => "forecast_crossing",
            Self::SustainedAlarm => "sustained_alarm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceItem {
    pub device_id: DeviceId,
    pub level: BehaviorLevel,
    pub current_score: f64,
    pub predicted_peak: f64,
    /// Absolute tick of the first forecast crossing.
    pub crossing_tick: Option<u64>,
    pub window: usize,
    pub reason: MaintenanceReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceList {
    pub tick: u64,
    pub items: Vec<MaintenanceItem>,
}

impl MaintenanceList {
    pub fn devices(&self) -> BTreeSet<DeviceId> {
        self.items.iter().map(|i| i.device_id.clone()).collect()
    }
}

fn item_for(state: &OlArimaState, tick: u64, window: usize, threshold: f64) -> Option<MaintenanceItem> {
    let f = state.predict(window).ok()?;
    let current = state.last()?;
    let peak = f.forecast.iter().copied().fold(current, f64::max).clamp(0.0, 1.0);
    let base = MaintenanceItem {
        device_id: state.device_id.clone(),
        level: state.level,
        current_score: current,
        predicted_peak: peak,
        crossing_tick: None,
        window,
        reason: MaintenanceReason::ForecastCrossing,
    };
    // a score already at the threshold cannot cross it; the sustained rule covers it
    if let Some(h) = f.forecast.iter().position(|v| *v >= threshold).filter(|_| current < threshold) {
        return Some(MaintenanceItem { crossing_tick: Some(tick + h as u64 + 1), ..base });
    }
    state.sustained_at(threshold).then_some(MaintenanceItem { reason: MaintenanceReason::SustainedAlarm, ..base })
}

/// One item per outlier device: the earliest crossing across its levels,
/// else a sustained alarm. States still warming up are skipped.
pub fn build_maintenance_list(
    outliers: &OutlierReport,
    states: &BTreeMap<(DeviceId, BehaviorLevel), OlArimaState>,
    window: usize,
    threshold: f64,
) -> MaintenanceList {
    let devices: BTreeSet<&DeviceId> = outliers.outliers.iter().map(|o| &o.device_id).collect();
    let mut items = Vec::new();
    for id in devices {
        let best = states
            .range((id.clone(), BehaviorLevel::B1)..=(id.clone(), BehaviorLevel::B4))
            .filter_map(|(_, s)| item_for(s, outliers.tick, window, threshold))
            .min_by(rank);
        items.extend(best);
    }
    items.sort_by(rank);
    MaintenanceList { tick: outliers.tick, items }
}

fn rank(a: &MaintenanceItem, b: &MaintenanceItem) -> std::cmp::Ordering {
    let key = |i: &MaintenanceItem| i.crossing_tick.unwrap_or(u64::MAX);
    key(a).cmp(&key(b)).then(b.predicted_peak.total_cmp(&a.predicted_peak)).then_with(|| a.device_id.cmp(&b.device_id))
}

/// `tick,device_id,reason,current,predicted_peak,crossing_tick`.
pub fn format_maintenance(tick: u64, item: &MaintenanceItem) -> String {
    let crossing = item.crossing_tick.map(|t| t.to_string()).unwrap_or_default();
    format!(
        "{tick},{},{},{},{},{crossing}",
        item.device_id,
        item.reason.as_str(),
        item.current_score,
        item.predicted_peak
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Outlier, OutlierReason};

    fn report(ids: &[&str]) -> OutlierReport {
        OutlierReport {
            tick: 100,
            outliers: ids
                .iter()
                .map(|id| Outlier {
                    device_id: DeviceId::new(*id),
                    distance: 1.0,
                    nearest_centroid: 0,
                    reason: OutlierReason::FarPoint,
                })
                .collect(),
        }
    }

    fn fed(id: &str, values: impl IntoIterator<Item = f64>, d: usize) -> ((DeviceId, BehaviorLevel), OlArimaState) {
        let mut s = OlArimaState::new(DeviceId::new(id), BehaviorLevel::B1, 2, d);
        for v in values {
            s.update(v);
        }
        ((DeviceId::new(id), BehaviorLevel::B1), s)
    }

    #[test]
    fn no_outliers_no_items() {
        let states = BTreeMap::from([fed("a", (0..50).map(|t| t as f64 / 50.0), 1)]);
        assert!(build_maintenance_list(&report(&[]), &states, 60, 0.9).items.is_empty());
    }

    #[test]
    fn rising_outlier_crosses_in_window() {
        // slope 0.01 from 0.45 at the last tick: reaches 0.9 after 45 steps
        let rising = (0..40).map(|t| 0.06 + 0.01 * t as f64 + if t % 2 == 0 { 1e-4 } else { -1e-4 });
        let states = BTreeMap::from([fed("a", rising, 1), fed("b", (0..40).map(|t| 0.5 + 0.01 * (t % 3) as f64), 0)]);
        let list = build_maintenance_list(&report(&["a", "b"]), &states, 60, 0.9);
        assert_eq!(list.items.len(), 1);
        let item = &list.items[0];
        assert_eq!(item.reason, MaintenanceReason::ForecastCrossing);
        let c = item.crossing_tick.unwrap();
        assert!((144..=146).contains(&c), "{c}");
        assert!(format_maintenance(100, item).starts_with("100,a,forecast_crossing,"));
    }

    #[test]
    fn step_change_caught_as_sustained() {
        let high = |n: usize| (0..60).map(move |t| if t < 60 - n { 0.2 + 0.05 * (t % 2) as f64 } else { 0.95 });
        let states = BTreeMap::from([fed("a", high(5), 0)]);
        let list = build_maintenance_list(&report(&["a"]), &states, 0, 0.9);
        assert_eq!(list.items.len(), 1);
        assert_eq!(list.items[0].reason, MaintenanceReason::SustainedAlarm);
        assert_eq!(list.items[0].crossing_tick, None);
        let states = BTreeMap::from([fed("a", high(4), 0)]);
        assert!(build_maintenance_list(&report(&["a"]), &states, 0, 0.9).items.is_empty());
    }

    #[test]
    fn isolated_spike_is_not_a_crossing() {
        let spiky = (0..60).map(|t| if t == 59 { 0.97 } else { 0.3 + 0.02 * (t % 3) as f64 });
        let states = BTreeMap::from([fed("a", spiky, 0)]);
        assert!(build_maintenance_list(&report(&["a"]), &states, 60, 0.9).items.is_empty());
    }

    #[test]
    fn sorted_by_crossing_then_peak() {
        let mk = |id: &str, c: Option<u64>, peak: f64| MaintenanceItem {
            device_id: DeviceId::new(id),
            level: BehaviorLevel::B1,
            current_score: 0.5,
            predicted_peak: peak,
            crossing_tick: c,
            window: 60,
            reason: MaintenanceReason::ForecastCrossing,
        };
        let mut v = [mk("a", None, 0.99), mk("b", Some(12), 0.91), mk("c", Some(12), 0.95), mk("d", Some(3), 0.9)];
        v.sort_by(rank);
        let ids: Vec<_> = v.iter().map(|i| i.device_id.as_str()).collect();
        assert_eq!(ids, ["d", "c", "b", "a"]);
    }
}
