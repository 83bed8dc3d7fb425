//! Evaluation metrics computed on full test splits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BC above this value indicates bimodality (the uniform distribution's BC).
pub const BIMODALITY_THRESHOLD: f64 = 0.555;
pub const DEFAULT_JS_BINS: usize = 64;
/// Pseudo-count added to every histogram bin before normalizing.
pub const JS_SMOOTHING: f64 = 1e-10;

fn check_pair(pred: &[f64], target: &[f64], op: &str) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::contract(format!(
            "{op}: length mismatch {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract(format!("{op}: empty input")));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, "rmse")?;
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, "mae")?;
    let sae: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    Ok(sae / pred.len() as f64)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// W1 between two empirical distributions of possibly different sizes:
/// the integral of `|F_a - F_b|` over the merged breakpoints.
pub fn exact_wasserstein(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("exact_wasserstein: empty sample"));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev = sa[0].min(sb[0]);
    while i < sa.len() || j < sb.len() {
        let next = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / na - j as f64 / nb).abs();
        total += gap * (next - prev);
        while i < sa.len() && sa[i] == next {
            i += 1;
        }
        while j < sb.len() && sb[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

fn histogram(sample: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![JS_SMOOTHING; bins];
    for &v in sample {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}

/// Jensen-Shannon divergence (base 2, in `[0, 1]`) between histograms of the
/// two samples over `bins` equal-width bins spanning their joint range.
pub fn js_divergence(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("js_divergence: empty sample"));
    }
    if bins == 0 {
        return Err(Error::contract("js_divergence: zero bins"));
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::contract("js_divergence: non-finite sample value"));
    }
    if hi == lo {
        // Every value in both samples is the same constant.
        return Ok(0.0);
    }
    let width = (hi - lo) / bins as f64;
    let p = histogram(a, lo, width, bins);
    let q = histogram(b, lo, width, bins);
    let mut js = 0.0;
    for (&pi, &qi) in p.iter().zip(&q) {
        let mi = 0.5 * (pi + qi);
        js += 0.5 * pi * (pi / mi).log2() + 0.5 * qi * (qi / mi).log2();
    }
    Ok(js.clamp(0.0, 1.0))
}

/// Moments of a sample using biased central moments `m_k`:
/// skewness `m3 / m2^1.5` and excess kurtosis `m4 / m2^2 - 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub sample: Vec<f64>,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl DistributionSummary {
    pub fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::contract("summary of empty sample"));
        }
        let n = sample.len();
        let nf = n as f64;
        let mean = sample.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in sample {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        let std = m2.sqrt();
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(DistributionSummary {
            sample: sorted(sample),
            n,
            mean,
            std,
            skewness,
            excess_kurtosis,
        })
    }
}

/// `(g^2 + 1) / (k + 3 (n-1)^2 / ((n-2)(n-3)))`.
pub fn bimodality_coefficient(s: &DistributionSummary) -> Result<f64> {
    if s.n < 4 {
        return Err(Error::contract(format!("bimodality coefficient needs n >= 4, got {}", s.n)));
    }
    if !(s.std > 0.0) {
        return Err(Error::contract("bimodality coefficient of a zero-variance sample"));
    }
    let n = s.n as f64;
    let denom = s.excess_kurtosis + 3.0 * (n - 1.0).powi(2) / ((n - 2.0) * (n - 3.0));
    if !(denom > 0.0) {
        return Err(Error::contract(format!("bimodality coefficient denominator {denom} <= 0")));
    }
    Ok((s.skewness * s.skewness + 1.0) / denom)
}

pub fn bimodality_of(sample: &[f64]) -> Result<f64> {
    bimodality_coefficient(&DistributionSummary::new(sample)?)
}

/// `|BC(target) - BC(pred)|`.
pub fn delta_bc(target: &[f64], pred: &[f64]) -> Result<f64> {
    Ok((bimodality_of(target)? - bimodality_of(pred)?).abs())
}

/// Scott's rule: `std * n^(-1/5)`.
pub fn scott_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() * n.powf(-0.2)
}

/// Gaussian kernel density estimate evaluated at each grid point.
pub fn kde_density(sample: &[f64], grid: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0) {
        return Err(Error::contract(format!("kde bandwidth must be > 0, got {bandwidth}")));
    }
    if sample.is_empty() {
        return Err(Error::contract("kde of empty sample"));
    }
    let norm = 1.0 / (sample.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            sample
                .iter()
                .map(|&s| {
                    let u = (x - s) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points).map(|i| lo + step * i as f64).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn pointwise_metrics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 3.5);
        assert!(rmse(&[0.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn wasserstein_point_masses() {
        assert_eq!(exact_wasserstein(&[1.0, 5.0], &[5.0, 1.0]).unwrap(), 0.0);
        assert_eq!(exact_wasserstein(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!(exact_wasserstein(&[], &[1.0]).is_err());
    }

    #[test]
    fn wasserstein_unequal_sizes() {
        // Masses 1/2 at {0, 1} against 1/3 at {0, 1, 2}: the CDF gap is 1/6
        // on [0, 1) and 1/3 on [1, 2), total 1/2.
        let w = exact_wasserstein(&[0.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn js_basic_properties() {
        let a = [0.1, 0.5, 0.9, 1.3];
        assert_eq!(js_divergence(&a, &a, 64).unwrap(), 0.0);
        let b = [10.0, 10.5, 11.0];
        let d = js_divergence(&a, &b, 64).unwrap();
        assert!(d > 0.99 && d <= 1.0, "{d}");
        let c = [0.0, 2.0, 2.5, 7.0];
        assert_eq!(js_divergence(&a, &c, 64).unwrap(), js_divergence(&c, &a, 64).unwrap());
        assert_eq!(js_divergence(&[3.0, 3.0], &[3.0], 64).unwrap(), 0.0);
        assert!(js_divergence(&a, &c, 0).is_err());
    }

    #[test]
    fn bc_analytic_limits() {
        let mut rng = Rng::new(1);
        let normal: Vec<f64> = (0..100_000).map(|_| rng.normal()).collect();
        assert!((bimodality_of(&normal).unwrap() - 1.0 / 3.0).abs() < 0.02);
        let uniform: Vec<f64> = (0..100_000).map(|_| rng.uniform()).collect();
        assert!((bimodality_of(&uniform).unwrap() - 5.0 / 9.0).abs() < 0.02);
        let two_point: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        assert!((bimodality_of(&two_point).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn bc_contract_errors() {
        assert!(bimodality_of(&[1.0, 2.0, 3.0]).is_err());
        assert!(bimodality_of(&[2.0; 10]).is_err());
    }

    #[test]
    fn delta_bc_symmetry() {
        let mut rng = Rng::new(3);
        let two_point: Vec<f64> = (0..20_000).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let normal: Vec<f64> = (0..20_000).map(|_| rng.normal()).collect();
        assert_eq!(delta_bc(&normal, &normal).unwrap(), 0.0);
        let d = delta_bc(&two_point, &normal).unwrap();
        assert_eq!(d, delta_bc(&normal, &two_point).unwrap());
        assert!((d - 2.0 / 3.0).abs() < 0.03, "{d}");
    }

    #[test]
    fn kde_peak_and_mass() {
        let h = 0.7;
        let d = kde_density(&[2.0], &[2.0], h).unwrap();
        assert!((d[0] - 1.0 / (h * (2.0 * PI).sqrt())).abs() < 1e-15);

        let sample = [-1.0, 0.0, 0.3, 2.0];
        let bw = scott_bandwidth(&sample);
        let grid = linspace(-1.0 - 6.0 * bw, 2.0 + 6.0 * bw, 4001);
        let dens = kde_density(&sample, &grid, bw).unwrap();
        let dx = grid[1] - grid[0];
        let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
        assert!((integral - 1.0).abs() < 1e-3);

        let shifted: Vec<f64> = sample.iter().map(|v| v + 5.0).collect();
        let grid2: Vec<f64> = grid.iter().map(|v| v + 5.0).collect();
        let dens2 = kde_density(&shifted, &grid2, bw).unwrap();
        for (a, b) in dens.iter().zip(&dens2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(kde_density(&sample, &grid, 0.0).is_err());
    }
}
