//! Post-fit interpretation: k-means customer typing and single-attribute
//! probability sweeps.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::{ChoiceEvent, ModelKind};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares after every Lloyd iteration.
    pub sse_history: Vec<f64>,
}

impl KMeansResult {
    pub fn sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }

    /// `cluster,z_1..z_d` rows.
    pub fn centroids_csv(&self) -> String {
        let d = self.centroids.first().map_or(0, Vec::len);
        let mut out = String::from("cluster");
        for j in 1..=d {
            write!(out, ",z_{j}").unwrap();
        }
        out.push('\n');
        for (c, centroid) in self.centroids.iter().enumerate() {
            write!(out, "{c}").unwrap();
            for v in centroid {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Cluster on per-feature z-scores; centroids are reported in original units.
    pub standardize: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 100,
            standardize: false,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, lowest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn sse(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding followed by Lloyd iterations until the labels stop
/// changing or `max_iter` is reached. A cluster that empties is re-seeded
/// at the point farthest from its own centroid.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R, opts: KMeansOptions) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("k-means needs at least one point".into()));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let d = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != d) {
        return Err(Error::dim("k-means point", d, bad.len()));
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }

    let (mean, scale) = if opts.standardize {
        let n = points.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = points.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        (mean, scale)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let work: Vec<Vec<f64>> = points
        .iter()
        .map(|p| (0..d).map(|j| (p[j] - mean[j]) / scale[j]).collect())
        .collect();

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = vec![work[rng.gen_range(0..work.len())].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = work.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = weights.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        centroids.push(work[pick].clone());
    }

    let mut labels: Vec<usize> = work.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut sse_history = Vec::new();
    for _ in 0..opts.max_iter {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in work.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let far = work
                    .iter()
                    .zip(&labels)
                    .map(|(p, &l)| sq_dist(p, &centroids[l]))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, dd)| if dd > acc.1 { (i, dd) } else { acc })
                    .0;
                centroids[c] = work[far].clone();
            }
        }
        sse_history.push(sse(&work, &centroids, &labels));
        let next: Vec<usize> = work.iter().map(|p| nearest(p, &centroids).0).collect();
        let converged = next == labels;
        labels = next;
        if converged {
            break;
        }
    }
    let final_sse = sse(&work, &centroids, &labels);
    if sse_history.last().is_none_or(|&s| final_sse < s) {
        sse_history.push(final_sse);
    }

    let centroids = centroids
        .into_iter()
        .map(|c| (0..d).map(|j| c[j] * scale[j] + mean[j]).collect())
        .collect();
    Ok(KMeansResult {
        centroids,
        labels,
        sse_history,
    })
}

/// One-axis sweep of a single product attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base_event: ChoiceEvent,
    pub target_alternative: usize,
    pub target_feature: usize,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub probabilities: Vec<f64>,
}

/// Evenly spaced grid with exact endpoints.
pub fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|j| {
            if j + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * j as f64 / (steps - 1) as f64
            }
        })
        .collect()
}

/// Choice probabilities as one attribute of one alternative moves over a
/// grid; everything else in the event stays fixed.
pub fn sweep(model: &ModelKind, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.steps < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least 2 steps".into()));
    }
    let n = spec.base_event.num_alternatives();
    if spec.target_alternative >= n {
        return Err(Error::InvalidArgument(format!(
            "target alternative {} out of range for {n} alternatives",
            spec.target_alternative
        )));
    }
    let d_x = spec.base_event.d_x();
    if spec.target_feature >= d_x {
        return Err(Error::InvalidArgument(format!(
            "target feature {} out of range for {d_x} features",
            spec.target_feature
        )));
    }
    grid(spec.lo, spec.hi, spec.steps)
        .into_iter()
        .map(|value| {
            let mut event = spec.base_event.clone();
            event.products[spec.target_alternative][spec.target_feature] = value;
            Ok(SweepRow {
                value,
                probabilities: model.probabilities(&event)?,
            })
        })
        .collect()
}

/// `value,p_1..p_n` rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let n = rows.first().map_or(0, |r| r.probabilities.len());
    let mut out = String::from("value");
    for i in 1..=n {
        write!(out, ",p_{i}").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(out, "{:?}", r.value).unwrap();
        for p in &r.probabilities {
            write!(out, ",{p:?}").unwrap();
        }
        out.push('\n');
    }
    out
}
