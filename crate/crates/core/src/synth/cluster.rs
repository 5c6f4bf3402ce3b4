//! k-means with k-means++ seeding, silhouette-based choice of k and
//! distance/size based outlier rules.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::ScoreMatrix;
use super::SynthError;
use crate::models::nn::sq_dist;
use crate::rng;
use crate::telemetry::{BehaviorLevel, DeviceId};

pub const MAX_AUTO_K: usize = 8;
pub const MAX_RESTARTS: usize = 50;
pub const SHIFT_TOLERANCE: f64 = 1e-9;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub wcss: f64,
    /// Within-cluster sum of squares after every iteration of the winning run.
    pub history: Vec<f64>,
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(mu, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<R: Rng>(r: &mut R, points: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[r.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            r.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment = vec![0; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_ITER {
        for (i, p) in points.iter().enumerate() {
            assignment[i] = nearest(&centroids, p).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        // An empty cluster takes the point farthest from its centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| counts[assignment[*i]] > 1)
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignment[i]])))
                    .fold((usize::MAX, -1.0), |b, x| if x.1 > b.1 { x } else { b });
                if far == usize::MAX {
                    continue;
                }
                let old = assignment[far];
                counts[old] -= 1;
                sums[old].iter_mut().zip(&points[far]).for_each(|(s, v)| *s -= v);
                assignment[far] = c;
                counts[c] = 1;
                sums[c] = points[far].clone();
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        let wcss: f64 = points.iter().zip(&assignment).map(|(p, &c)| sq_dist(p, &centroids[c])).sum();
        history.push(wcss);
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignment[i] = nearest(&centroids, p).0;
    }
    let wcss = points.iter().zip(&assignment).map(|(p, &c)| sq_dist(p, &centroids[c])).sum();
    KMeans { centroids, assignment, wcss, history }
}

/// Best of `restarts` seeded runs by within-cluster sum of squares.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> KMeans {
    assert!(k >= 1 && k <= points.len(), "1 <= k <= n");
    let mut r = rng::stream(&[seed, 0x6b6d_6561_6e73]);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.clamp(1, MAX_RESTARTS) {
        let run = lloyd(points, plus_plus(&mut r, points, k));
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    best.unwrap()
}

/// Mean silhouette; singleton clusters contribute 0 and `k = 1` scores 0.
pub fn silhouette(points: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let n = points.len();
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|c| sizes[*c] += 1);
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignment[j]] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|c| *c != own && sizes[*c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierReason {
    FarPoint,
    MicroCluster,
}

impl OutlierReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FarPoint => "far_point",
            Self::MicroCluster => "micro_cluster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub device_id: DeviceId,
    pub distance: f64,
    pub nearest_centroid: usize,
    pub reason: OutlierReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub tick: u64,
    pub outliers: Vec<Outlier>,
}

/// Clustering of one group of devices sharing the same populated levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub levels: Vec<BehaviorLevel>,
    pub devices: Vec<DeviceId>,
    pub k: usize,
    pub result: KMeans,
    pub silhouette: f64,
}

/// Far points (distance above mean + 3 population std) and members of
/// clusters smaller than `max(2, 1% of n)`; indices into `points`.
pub fn find_outliers(points: &[Vec<f64>], km: &KMeans) -> Vec<(usize, f64, usize, OutlierReason)> {
    let n = points.len();
    let dist: Vec<f64> = points.iter().zip(&km.assignment).map(|(p, &c)| sq_dist(p, &km.centroids[c]).sqrt()).collect();
    let mu = dist.iter().sum::<f64>() / n as f64;
    let sigma = (dist.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n as f64).sqrt();
    let cut = mu + 3.0 * sigma;
    let mut sizes = vec![0usize; km.centroids.len()];
    km.assignment.iter().for_each(|c| sizes[*c] += 1);
    let min_size = (0.01 * n as f64).max(2.0);
    let mut out = Vec::new();
    for (i, (&d, &c)) in dist.iter().zip(&km.assignment).enumerate() {
        if d > cut {
            out.push((i, d, c, OutlierReason::FarPoint));
        } else if (sizes[c] as f64) < min_size {
            out.push((i, d, c, OutlierReason::MicroCluster));
        }
    }
    out
}

pub fn choose_k(points: &[Vec<f64>], seed: u64, restarts: usize) -> (usize, KMeans, f64) {
    let n = points.len();
    let mut best = (1, kmeans(points, 1, seed, restarts), 0.0);
    for k in 2..=MAX_AUTO_K.min(n - 1) {
        let km = kmeans(points, k, seed, restarts);
        let s = silhouette(points, &km.assignment, k);
        if s > best.2 {
            best = (k, km, s);
        }
    }
    best
}

/// Clusters devices per populated-level signature and collects outliers.
pub fn cluster_and_outliers(
    m: &ScoreMatrix,
    k: KChoice,
    seed: u64,
    restarts: usize,
) -> Result<(Vec<Clustering>, OutlierReport), SynthError> {
    let mut groups: BTreeMap<Vec<BehaviorLevel>, Vec<DeviceId>> = BTreeMap::new();
    for id in m.rows.keys() {
        let sig = m.signature(id);
        if !sig.is_empty() {
            groups.entry(sig).or_default().push(id.clone());
        }
    }
    let populated: usize = groups.values().map(Vec::len).sum();
    if populated < 2 {
        return Err(SynthError::TooFewDevices { have: populated });
    }
    let mut clusterings = Vec::new();
    let mut report = OutlierReport { tick: m.tick, outliers: Vec::new() };
    for (levels, devices) in groups {
        if devices.len() < 2 {
            continue;
        }
        let points: Vec<Vec<f64>> = devices.iter().map(|d| m.features(d)).collect();
        let (k, result, sil) = match k {
            KChoice::Auto => choose_k(&points, seed, restarts),
            KChoice::Fixed(k) => {
                let k = k.clamp(1, points.len());
                let km = kmeans(&points, k, seed, restarts);
                let s = silhouette(&points, &km.assignment, k);
                (k, km, s)
            }
        };
        for (i, distance, nearest_centroid, reason) in find_outliers(&points, &result) {
            report.outliers.push(Outlier { device_id: devices[i].clone(), distance, nearest_centroid, reason });
        }
        clusterings.push(Clustering { levels, devices, k, result, silhouette: sil });
    }
    Ok((clusterings, report))
}
