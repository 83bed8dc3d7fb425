//! Brute-force reference implementations.
//!
//! Everything here is deliberately slow and self-contained: nothing is
//! imported from `distreg`, so agreement between an oracle and the library
//! is evidence that both are right rather than that they share a bug.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleError(pub String);

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "oracle contract violated: {}", self.0)
    }
}

impl std::error::Error for OracleError {}

/// Largest sample size accepted by [`brute_force_w1`] (6! = 720 pairings).
pub const MAX_BRUTE_FORCE_N: usize = 6;

/// Minimum over every pairing of `a` with `b` of the mean absolute difference.
pub fn brute_force_w1(a: &[f64], b: &[f64]) -> Result<f64, OracleError> {
    if a.len() != b.len() {
        return Err(OracleError(format!("unequal sizes {} and {}", a.len(), b.len())));
    }
    if a.is_empty() || a.len() > MAX_BRUTE_FORCE_N {
        return Err(OracleError(format!("size {} outside 1..={MAX_BRUTE_FORCE_N}", a.len())));
    }
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum();
        if cost < best {
            best = cost;
        }
    });
    Ok(best / n as f64)
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// Fraction of `sample` that is `<= x`, by linear scan.
fn ecdf(sample: &[f64], x: f64) -> f64 {
    sample.iter().filter(|&&v| v <= x).count() as f64 / sample.len() as f64
}

/// Integrals of `|F - G|` and `(F - G)^2` between two empirical CDFs.
///
/// The integrand is a step function, so it is evaluated exactly on every
/// interval between consecutive pooled breakpoints. When `grid_points > 0`
/// those intervals are additionally subdivided by a uniform grid over the
/// pooled range and each grid cell is evaluated at its midpoint with a fresh
/// linear-scan CDF; the result is the same integral computed independently of
/// the breakpoint bookkeeping.
pub fn dense_cdf_integral(a: &[f64], b: &[f64], grid_points: usize) -> (f64, f64) {
    if a.is_empty() || b.is_empty() {
        return (0.0, 0.0);
    }
    let mut cuts: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let lo = cuts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cuts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if grid_points > 0 && hi > lo {
        let step = (hi - lo) / grid_points as f64;
        cuts.extend((1..grid_points).map(|i| lo + step * i as f64));
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();

    let (mut w1, mut cramer) = (0.0, 0.0);
    if grid_points > 0 {
        // Sweep pointers over the sorted samples instead of rescanning per
        // cell so that a 10^6 grid stays cheap; the pointer arithmetic is
        // independent of the breakpoint weights used by the library.
        let mut sa: Vec<f64> = a.to_vec();
        let mut sb: Vec<f64> = b.to_vec();
        sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (mut ia, mut ib) = (0usize, 0usize);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            while ia < sa.len() && sa[ia] <= mid {
                ia += 1;
            }
            while ib < sb.len() && sb[ib] <= mid {
                ib += 1;
            }
            let d = ia as f64 / sa.len() as f64 - ib as f64 / sb.len() as f64;
            let dx = w[1] - w[0];
            w1 += d.abs() * dx;
            cramer += d * d * dx;
        }
    } else {
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let d = ecdf(a, mid) - ecdf(b, mid);
            let dx = w[1] - w[0];
            w1 += d.abs() * dx;
            cramer += d * d * dx;
        }
    }
    (w1, cramer)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error used by gradient checks: `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoMeans {
    pub low: f64,
    pub high: f64,
    pub sse: f64,
}

/// Optimal 1-D 2-partition by trying every split of the sorted values.
pub fn exhaustive_2means_1d(values: &[f64]) -> Result<TwoMeans, OracleError> {
    if values.len() < 2 || values.len() > 50 {
        return Err(OracleError(format!("size {} outside 2..=50", values.len())));
    }
    let mut v = values.to_vec();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut best: Option<TwoMeans> = None;
    for k in 1..v.len() {
        let (l, r) = v.split_at(k);
        let ml = l.iter().sum::<f64>() / l.len() as f64;
        let mr = r.iter().sum::<f64>() / r.len() as f64;
        let sse: f64 = l.iter().map(|x| (x - ml).powi(2)).sum::<f64>()
            + r.iter().map(|x| (x - mr).powi(2)).sum::<f64>();
        if best.is_none_or(|b| sse < b.sse) {
            best = Some(TwoMeans { low: ml, high: mr, sse });
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w1_identical_and_shifted() {
        assert_eq!(brute_force_w1(&[1.0, 2.0, 5.0], &[5.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(brute_force_w1(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert!(brute_force_w1(&[0.0; 7], &[0.0; 7]).is_err());
        assert!(brute_force_w1(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn sorted_pairing_attains_minimum() {
        let a: [f64; 5] = [0.3, -1.2, 2.5, 0.0, 4.1];
        let b = [1.0, 1.1, -3.0, 0.2, 0.9];
        let mut sa = a.to_vec();
        let mut sb = b.to_vec();
        sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let sorted: f64 =
            sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        assert!((brute_force_w1(&a, &b).unwrap() - sorted).abs() < 1e-12);
    }

    #[test]
    fn cdf_integrals_point_masses() {
        let (w, c) = dense_cdf_integral(&[0.0], &[1.0], 0);
        assert_eq!((w, c), (1.0, 1.0));
        let (w, c) = dense_cdf_integral(&[0.0, 1.0], &[0.0, 3.0], 1000);
        assert!((w - 1.0).abs() < 1e-12);
        assert!((c - 0.5).abs() < 1e-12);
        let (w2, c2) = dense_cdf_integral(&[0.0, 3.0], &[0.0, 1.0], 1000);
        assert_eq!((w, c), (w2, c2));
    }

    #[test]
    fn finite_differences() {
        let g = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-6);
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let g = finite_diff_grad(|x| 3.0 * x[0] - x[1], &[0.5, 7.0], 1e-6);
        assert!((g[0] - 3.0).abs() < 1e-9 && (g[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_means_separated() {
        let r = exhaustive_2means_1d(&[10.0, 0.0, 10.0, 0.0]).unwrap();
        assert_eq!((r.low, r.high, r.sse), (0.0, 10.0, 0.0));
        let r = exhaustive_2means_1d(&[1.0, 2.0, 3.0, 100.0]).unwrap();
        assert_eq!((r.low, r.high), (2.0, 100.0));
    }
}
