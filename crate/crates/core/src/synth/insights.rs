use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::matrix::ScoreMatrix;
use super::SynthError;
use crate::telemetry::DeviceId;

pub const BINS: usize = 10;
pub const DEFAULT_K: usize = 5;
pub const LOCATION_MARGIN: f64 = 0.2;
pub const BATCH_STD_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Subsystem,
    Location,
    Batch,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Subsystem => "subsystem",
            Self::Location => "location",
            Self::Batch => "batch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDefinition {
    pub kind: GroupKind,
    pub id: String,
    pub members: BTreeSet<DeviceId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsightFlag {
    /// Location scores sit well above the fleet's.
    ElevatedVsFleet,
    /// Batch members share a similar alarming score.
    SimilarAlarming,
}

impl InsightFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ElevatedVsFleet => "elevated_vs_fleet",
            Self::SimilarAlarming => "similar_alarming",
        }
    }
}

pub type Histogram = [usize; BINS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInsight {
    pub group: GroupDefinition,
    pub tick: u64,
    pub histogram: Histogram,
    pub mean: f64,
    pub std: f64,
    /// Devices ranked by their highest current level score.
    pub lowest_k: Vec<(DeviceId, f64)>,
    pub highest_k: Vec<(DeviceId, f64)>,
    /// Past histograms, oldest first, including this tick's.
    pub history: Vec<Histogram>,
    pub flags: Vec<InsightFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightHistory {
    pub depth: usize,
    /// Keyed by `kind/id`.
    rings: BTreeMap<String, VecDeque<Histogram>>,
}

impl InsightHistory {
    pub fn new(depth: usize) -> Self {
        Self { depth: depth.max(1), rings: BTreeMap::new() }
    }

    fn push(&mut self, kind: GroupKind, id: &str, h: Histogram) -> Vec<Histogram> {
        let ring = self.rings.entry(format!("{}/{id}", kind.as_str())).or_default();
        ring.push_back(h);
        while ring.len() > self.depth {
            ring.pop_front();
        }
        ring.iter().copied().collect()
    }
}

pub fn bin_of(v: f64) -> usize {
    ((v * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsightOptions {
    pub k: usize,
    pub alarm_threshold: f64,
}

impl Default for InsightOptions {
    fn default() -> Self {
        Self { k: DEFAULT_K, alarm_threshold: 0.9 }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

pub fn group_insights(
    m: &ScoreMatrix,
    defs: &[GroupDefinition],
    opts: InsightOptions,
    history: &mut InsightHistory,
) -> Result<Vec<GroupInsight>, SynthError> {
    for d in defs {
        if let Some(bad) = d.members.iter().find(|id| !m.rows.contains_key(*id)) {
            return Err(SynthError::UnknownDevice(bad.clone()));
        }
    }
    let fleet: Vec<f64> = m.current_values().collect();
    let (fleet_mean, _) = mean_std(&fleet);
    let mut out = Vec::with_capacity(defs.len());
    for d in defs {
        let mut histogram = [0usize; BINS];
        let mut values = Vec::new();
        let mut per_device = Vec::new();
        for id in &d.members {
            let cur: Vec<f64> = m.rows[id].values().filter_map(|c| c.current()).collect();
            for v in &cur {
                histogram[bin_of(*v)] += 1;
            }
            if let Some(worst) = cur.iter().copied().reduce(f64::max) {
                per_device.push((id.clone(), worst));
            }
            values.extend(cur);
        }
        let (mean, std) = mean_std(&values);
        per_device.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let lowest_k: Vec<_> = per_device.iter().take(opts.k).cloned().collect();
        let highest_k: Vec<_> = per_device.iter().rev().take(opts.k).cloned().collect();
        let mut flags = Vec::new();
        if !values.is_empty() {
            if d.kind == GroupKind::Location && mean - fleet_mean > LOCATION_MARGIN {
                flags.push(InsightFlag::ElevatedVsFleet);
            }
            if d.kind == GroupKind::Batch && mean >= opts.alarm_threshold && std < BATCH_STD_LIMIT {
                flags.push(InsightFlag::SimilarAlarming);
            }
        }
        let hist = history.push(d.kind, &d.id, histogram);
        out.push(GroupInsight {
            group: d.clone(),
            tick: m.tick,
            histogram,
            mean,
            std,
            lowest_k,
            highest_k,
            history: hist,
            flags,
        });
    }
    Ok(out)
}

/// `tick,kind,group_id,mean,std,bin0..bin9,flags` with flags joined by `|`.
pub fn format_insight(g: &GroupInsight) -> String {
    let mut s = format!("{},{},{},{},{}", g.tick, g.group.kind.as_str(), g.group.id, g.mean, g.std);
    for b in g.histogram {
        let _ = write!(s, ",{b}");
    }
    let flags: Vec<&str> = g.flags.iter().map(|f| f.as_str()).collect();
    let _ = write!(s, ",{}", flags.join("|"));
    s
}

#[cfg(test)]
mod tests {
    use super::super::matrix::{build_score_matrix, ScoreRecord};
    use super::*;
    use crate::models::AnomalyScore;
    use crate::telemetry::BehaviorLevel;

    fn matrix(values: &[(&str, f64)]) -> ScoreMatrix {
        let reg = values.iter().map(|(id, _)| (DeviceId::new(*id), vec![BehaviorLevel::B1])).collect();
        let recs: Vec<ScoreRecord> = values
            .iter()
            .map(|(id, v)| ScoreRecord {
                tick: 1,
                device_id: DeviceId::new(*id),
                level: BehaviorLevel::B1,
                score: AnomalyScore { value: *v, raw: *v, alarming: *v >= 0.9 },
            })
            .collect();
        build_score_matrix(1, &recs, &reg, 30)
    }

    fn def(kind: GroupKind, ids: &[&str]) -> GroupDefinition {
        GroupDefinition { kind, id: "g".into(), members: ids.iter().map(|s| DeviceId::new(*s)).collect() }
    }

    #[test]
    fn order_statistics() {
        let m = matrix(&[("a", 0.1), ("b", 0.2), ("c", 0.8), ("d", 0.9)]);
        let opts = InsightOptions { k: 1, ..Default::default() };
        let g =
            &group_insights(&m, &[def(GroupKind::Subsystem, &["a", "b", "c", "d"])], opts, &mut InsightHistory::new(4))
                .unwrap()[0];
        assert_eq!(g.lowest_k, vec![(DeviceId::new("a"), 0.1)]);
        assert_eq!(g.highest_k, vec![(DeviceId::new("d"), 0.9)]);
        assert_eq!(g.histogram.iter().sum::<usize>(), 4);
    }

    #[test]
    fn equal_alarming_batch_is_flagged() {
        let m = matrix(&[("a", 0.95), ("b", 0.95), ("c", 0.95)]);
        let g = &group_insights(
            &m,
            &[def(GroupKind::Batch, &["a", "b", "c"])],
            InsightOptions::default(),
            &mut InsightHistory::new(2),
        )
        .unwrap()[0];
        assert_eq!(g.histogram[9], 3);
        assert!(g.std < 1e-12);
        assert_eq!(g.flags, vec![InsightFlag::SimilarAlarming]);
    }

    #[test]
    fn hot_location_is_flagged() {
        let mut vals = vec![("h1", 0.9), ("h2", 0.9)];
        let cold: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        vals.extend(cold.iter().map(|s| (s.as_str(), 0.2)));
        let m = matrix(&vals);
        // fleet mean = (1.8 + 2.0) / 12
        let g = &group_insights(
            &m,
            &[def(GroupKind::Location, &["h1", "h2"])],
            InsightOptions::default(),
            &mut InsightHistory::new(2),
        )
        .unwrap()[0];
        assert_eq!(g.flags, vec![InsightFlag::ElevatedVsFleet]);
    }

    #[test]
    fn unknown_member_rejected() {
        let m = matrix(&[("a", 0.5)]);
        let err = group_insights(
            &m,
            &[def(GroupKind::Batch, &["zz"])],
            InsightOptions::default(),
            &mut InsightHistory::new(2),
        );
        assert!(matches!(err, Err(SynthError::UnknownDevice(_))));
    }

    #[test]
    fn history_ring_rotates_and_conserves_mass() {
        let m = matrix(&[("a", 0.5), ("b", 0.05)]);
        let mut h = InsightHistory::new(3);
        let d = [def(GroupKind::Subsystem, &["a", "b"])];
        let mut last = None;
        for _ in 0..5 {
            last = Some(group_insights(&m, &d, InsightOptions::default(), &mut h).unwrap().remove(0));
        }
        let g = last.unwrap();
        assert_eq!(g.history.len(), 3);
        assert!(g.history.iter().all(|hh| hh.iter().sum::<usize>() == 2));
        assert_eq!(format_insight(&g), "1,subsystem,g,0.275,0.225,1,0,0,0,0,1,0,0,0,0,");
    }
}
