use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeans2 {
    pub low: f64,
    pub high: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before assignments stabilized.
    pub converged: bool,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Within-cluster SSE of splitting sorted values into `[..cut]` and `[cut..]`,
/// from prefix sums of values and squares.
fn sse(sums: &[f64], squares: &[f64], cut: usize) -> f64 {
    let n = sums.len() - 1;
    let side = |lo: usize, hi: usize| {
        let s = sums[hi] - sums[lo];
        (squares[hi] - squares[lo] - s * s / (hi - lo) as f64).max(0.0)
    };
    side(0, cut) + side(cut, n)
}

fn best_split(v: &[f64], sums: &[f64], squares: &[f64]) -> usize {
    (1..v.len())
        .filter(|&c| v[c - 1] < v[c])
        .min_by(|&a, &b| sse(sums, squares, a).total_cmp(&sse(sums, squares, b)))
        .expect("at least two distinct values")
}

/// Lloyd's algorithm with two centers on scalars.
///
/// Centers start at the 10th and 90th percentiles (falling back to min and
/// max when those coincide). Points equidistant from both centers join the
/// low cluster. Once assignments are stable the result is checked against
/// every sorted split point and replaced by the lowest-SSE split if Lloyd
/// stopped in a local optimum, so the answer is the optimal 2-partition.
pub fn kmeans2_1d(values: &[f64], max_iter: usize) -> Result<KMeans2> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.len() < 2 || v[0] == v[v.len() - 1] {
        return Err(Error::contract("2-means needs at least two distinct values"));
    }
    let (mut low, mut high) = (percentile(&v, 0.1), percentile(&v, 0.9));
    if low == high {
        (low, high) = (v[0], v[v.len() - 1]);
    }
    let prefix: Vec<f64> = std::iter::once(0.0)
        .chain(v.iter().scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        }))
        .collect();
    let total = prefix[v.len()];
    let squares: Vec<f64> = std::iter::once(0.0)
        .chain(v.iter().scan(0.0, |acc, &x| {
            *acc += x * x;
            Some(*acc)
        }))
        .collect();

    let mut cut = usize::MAX;
    for iteration in 1..=max_iter {
        let mid = 0.5 * (low + high);
        let next_cut = v.partition_point(|&x| x <= mid);
        if next_cut == cut {
            let best = best_split(&v, &prefix, &squares);
            if sse(&prefix, &squares, best) < sse(&prefix, &squares, cut) {
                cut = best;
                low = prefix[cut] / cut as f64;
                high = (total - prefix[cut]) / (v.len() - cut) as f64;
            }
            return Ok(KMeans2 {
                low,
                high,
                iterations: iteration,
                converged: true,
            });
        }
        cut = next_cut;
        if cut == 0 || cut == v.len() {
            return Err(Error::contract("2-means produced an empty cluster"));
        }
        low = prefix[cut] / cut as f64;
        high = (total - prefix[cut]) / (v.len() - cut) as f64;
    }
    Ok(KMeans2 {
        low,
        high,
        iterations: max_iter,
        converged: false,
    })
}

/// Parameters of a separation transform, fitted on training targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub strength: f64,
    pub c_low: f64,
    pub c_high: f64,
    pub c_mid: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub kmeans_converged: bool,
}

impl SeparationConfig {
    pub fn apply(&self, y: f64) -> f64 {
        let s = self.strength;
        let anchor = if y <= self.c_mid { self.y_min } else { self.y_max };
        y * (1.0 - s) + anchor * s
    }
}

/// Split the target distribution into two modes.
///
/// 2-means on the training targets gives a midpoint `c_mid`; targets at or
/// below it are pulled toward the training minimum and the rest toward the
/// training maximum, `y' = y (1 - s) + anchor * s`. The same fitted transform
/// is applied to every row.
pub fn inject_separation(ds: &Dataset, strength: f64) -> Result<(Dataset, SeparationConfig)> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::contract(format!("separation {strength} outside [0, 1]")));
    }
    let train = ds.targets_at(&ds.train_indices());
    let km = kmeans2_1d(&train, 100)?;
    if km.low == km.high {
        return Err(Error::contract("2-means collapsed to identical centroids"));
    }
    let config = SeparationConfig {
        strength,
        c_low: km.low,
        c_high: km.high,
        c_mid: 0.5 * (km.low + km.high),
        y_min: train.iter().copied().fold(f64::INFINITY, f64::min),
        y_max: train.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        kmeans_converged: km.converged,
    };
    let mut out = ds.clone();
    out.targets.iter_mut().for_each(|y| *y = config.apply(*y));
    Ok((out, config))
}
