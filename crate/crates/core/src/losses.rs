//! Differentiable training objectives.
//!
//! The composite family combines three normalized distances computed inside a
//! batch: a root-mean-square error, a one-dimensional optimal-transport
//! distance between the prediction and target samples (Wasserstein-1 or
//! Cramér), and the mismatch between their ranges. Each distance `D` is mapped
//! through `N(D) = 1 - 1/(1 + D)` and the results are summed with weights
//! `1`, `alpha` and `beta`.
//!
//! Baseline objectives (MSE, Gaussian NLL, mixture NLL, pinball) live here too
//! so that every family is built on the same tape.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    CompositeWasserstein,
    CompositeCramer,
    Mse,
    GaussianNll,
    MdnNll,
    Pinball,
}

impl LossFamily {
    pub fn is_composite(self) -> bool {
        matches!(self, LossFamily::CompositeWasserstein | LossFamily::CompositeCramer)
    }

    pub fn label(self) -> &'static str {
        match self {
            LossFamily::CompositeWasserstein => "Wasser",
            LossFamily::CompositeCramer => "Cramer",
            LossFamily::Mse => "MSE",
            LossFamily::GaussianNll => "HMLP (Gauss)",
            LossFamily::MdnNll => "MDN (NLL)",
            LossFamily::Pinball => "MLPQ (Quant)",
        }
    }
}

/// Named composite configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `beta = 0`.
    Simple,
    /// `beta = alpha / 2`.
    Range,
    /// `alpha = 1`, `beta = 0`.
    Default,
}

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_QUANTILES: [f64; 3] = [0.1, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub family: LossFamily,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_quantiles")]
    pub quantile_levels: Vec<f64>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_quantiles() -> Vec<f64> {
    DEFAULT_QUANTILES.to_vec()
}

impl LossSpec {
    pub fn new(family: LossFamily) -> Self {
        LossSpec {
            family,
            alpha: 0.0,
            beta: 0.0,
            epsilon: DEFAULT_EPSILON,
            quantile_levels: default_quantiles(),
        }
    }

    pub fn composite(family: LossFamily, alpha: f64, beta: f64) -> Self {
        LossSpec {
            alpha,
            beta,
            ..LossSpec::new(family)
        }
    }

    /// A named variant. `alpha` is ignored for [`Variant::Default`].
    pub fn variant(family: LossFamily, variant: Variant, alpha: f64) -> Self {
        let (alpha, beta) = match variant {
            Variant::Simple => (alpha, 0.0),
            Variant::Range => (alpha, alpha / 2.0),
            Variant::Default => (1.0, 0.0),
        };
        LossSpec::composite(family, alpha, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        let levels = &self.quantile_levels;
        if self.family == LossFamily::Pinball && levels.is_empty() {
            return Err(Error::Config("pinball loss needs at least one quantile level".into()));
        }
        if levels.iter().any(|&t| !(t > 0.0 && t < 1.0)) || levels.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(format!(
                "quantile levels must be strictly increasing in (0, 1), got {levels:?}"
            )));
        }
        Ok(())
    }

    /// Upper bound (exclusive) of the composite objective.
    pub fn composite_bound(&self) -> f64 {
        1.0 + self.alpha + self.beta
    }

    /// Report label such as `Wasser-Range (a=0.5, b=0.25)`, `Cramer-Default`
    /// or `MSE`.
    pub fn label(&self) -> String {
        if !self.family.is_composite() {
            return self.family.label().to_string();
        }
        if self.alpha == 1.0 && self.beta == 0.0 {
            return format!("{}-Default", self.family.label());
        }
        let kind = if self.beta == 0.0 {
            "Simple"
        } else if self.beta == self.alpha / 2.0 {
            "Range"
        } else {
            "Custom"
        };
        format!(
            "{}-{} (a={}, b={})",
            self.family.label(),
            kind,
            self.alpha,
            self.beta
        )
    }
}

fn check_batch(tape: &Tape, pred: Var, target: &[f64], op: &'static str) -> Result<()> {
    let shape = tape.shape(pred);
    if target.is_empty() {
        return Err(Error::contract(format!("{op}: empty batch")));
    }
    if shape != (target.len(), 1) {
        return Err(Error::Shape {
            op,
            lhs: shape,
            rhs: (target.len(), 1),
        });
    }
    Ok(())
}

/// `sqrt(mean((pred - target)^2) + eps)`.
pub fn raw_rmse(tape: &mut Tape, pred: Var, target: &[f64], eps: f64) -> Result<Var> {
    check_batch(tape, pred, target, "raw_rmse")?;
    let mse = mse_loss(tape, pred, target)?;
    let shifted = tape.affine(mse, 1.0, eps);
    tape.sqrt(shifted)
}

/// Mean of squared residuals.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    check_batch(tape, pred, target, "mse_loss")?;
    let t = tape.column(target);
    let r = tape.sub(pred, t)?;
    let sq = tape.square(r);
    Ok(tape.mean(sq))
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Exact W1 between two equal-size empirical samples: the mean absolute
/// difference of the sorted samples.
pub fn wasserstein_batch(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    check_batch(tape, pred, target, "wasserstein_batch")?;
    let (sp, _) = tape.sort(pred)?;
    let st = tape.column(&sorted(target));
    let diff = tape.sub(sp, st)?;
    let abs = tape.abs(diff);
    Ok(tape.mean(abs))
}

/// Exact integral of `(F_pred - F_target)^2` for equal-size samples.
///
/// Between consecutive pooled values the CDF gap is constant, so the integral
/// is `sum_k (z[k+1] - z[k]) * c[k]^2`. Rearranged per breakpoint this is
/// `sum_k z[k] * (c[k-1]^2 - c[k]^2)`: linear in the prediction values with
/// weights fixed by the pooled ordering. The graph is that weighted sum.
pub fn cramer_batch(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    check_batch(tape, pred, target, "cramer_batch")?;
    let n = target.len();
    let pred_values: Vec<f64> = tape.value(pred).column(0).to_vec();

    // (value, is_target, index); ties put targets first.
    let mut pooled: Vec<(f64, bool, usize)> = pred_values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, false, i))
        .chain(target.iter().enumerate().map(|(i, &v)| (v, true, i)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));

    let step = 1.0 / n as f64;
    let mut pred_weights = vec![0.0; n];
    let mut target_part = 0.0;
    let mut gap_before = 0.0f64;
    for &(value, is_target, idx) in &pooled {
        let gap_after = if is_target { gap_before - step } else { gap_before + step };
        let w = gap_before * gap_before - gap_after * gap_after;
        if is_target {
            target_part += w * value;
        } else {
            pred_weights[idx] = w;
        }
        gap_before = gap_after;
    }

    let weights = tape.column(&pred_weights);
    let weighted = tape.mul(pred, weights)?;
    let pred_part = tape.sum(weighted);
    Ok(tape.affine(pred_part, 1.0, target_part))
}

/// `|(max pred - min pred) - (max target - min target)|`.
pub fn range_penalty(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    check_batch(tape, pred, target, "range_penalty")?;
    let t_max = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t_min = target.iter().copied().fold(f64::INFINITY, f64::min);
    let (hi, _) = tape.max(pred)?;
    let (lo, _) = tape.min(pred)?;
    let spread = tape.sub(hi, lo)?;
    let gap = tape.affine(spread, 1.0, -(t_max - t_min));
    Ok(tape.abs(gap))
}

/// `N(D) = 1 - 1/(1 + D)`, mapping `[0, inf)` onto `[0, 1)`.
pub fn normalize(tape: &mut Tape, d: Var) -> Result<Var> {
    let value = tape.scalar_value(d);
    if tape.shape(d) != (1, 1) || !(value >= 0.0) {
        return Err(Error::contract(format!(
            "normalize needs a non-negative scalar distance, got {value}"
        )));
    }
    let one = tape.scalar(1.0);
    let denom = tape.affine(d, 1.0, 1.0);
    let inv = tape.div(one, denom)?;
    Ok(tape.affine(inv, -1.0, 1.0))
}

/// `N(D_rmse) + alpha * N(D_dist) + beta * N(D_range)`.
pub fn composite_loss(tape: &mut Tape, pred: Var, target: &[f64], spec: &LossSpec) -> Result<Var> {
    let dist_fn: fn(&mut Tape, Var, &[f64]) -> Result<Var> = match spec.family {
        LossFamily::CompositeWasserstein => wasserstein_batch,
        LossFamily::CompositeCramer => cramer_batch,
        other => {
            return Err(Error::Config(format!(
                "composite_loss called with non-composite family {other:?}"
            )))
        }
    };
    let rmse = raw_rmse(tape, pred, target, spec.epsilon)?;
    let mut total = normalize(tape, rmse)?;
    if spec.alpha != 0.0 {
        let d = dist_fn(tape, pred, target)?;
        let n = normalize(tape, d)?;
        let weighted = tape.affine(n, spec.alpha, 0.0);
        total = tape.add(total, weighted)?;
    }
    if spec.beta != 0.0 {
        let d = range_penalty(tape, pred, target)?;
        let n = normalize(tape, d)?;
        let weighted = tape.affine(n, spec.beta, 0.0);
        total = tape.add(total, weighted)?;
    }
    Ok(total)
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Mean of `0.5 * (ln 2pi + log_var + (y - mu)^2 / exp(log_var))`.
pub fn gaussian_nll(tape: &mut Tape, mean: Var, log_var: Var, target: &[f64]) -> Result<Var> {
    check_batch(tape, mean, target, "gaussian_nll")?;
    check_batch(tape, log_var, target, "gaussian_nll")?;
    let t = tape.column(target);
    let r = tape.sub(t, mean)?;
    let sq = tape.square(r);
    let neg_lv = tape.neg(log_var);
    let precision = tape.exp(neg_lv);
    let scaled = tape.mul(sq, precision)?;
    let inner = tape.add(scaled, log_var)?;
    let per_sample = tape.affine(inner, 0.5, HALF_LN_2PI);
    Ok(tape.mean(per_sample))
}

/// Negative mean log-likelihood of a Gaussian mixture, via log-sum-exp.
///
/// `logits`, `means` and `scales` are `n x K`; `scales` must be positive.
pub fn mdn_nll(
    tape: &mut Tape,
    logits: Var,
    means: Var,
    scales: Var,
    target: &[f64],
) -> Result<Var> {
    let shape = tape.shape(logits);
    if target.is_empty() || shape.0 != target.len() {
        return Err(Error::Shape {
            op: "mdn_nll",
            lhs: shape,
            rhs: (target.len(), shape.1),
        });
    }
    if tape.shape(means) != shape || tape.shape(scales) != shape {
        return Err(Error::Shape {
            op: "mdn_nll",
            lhs: tape.shape(means),
            rhs: tape.shape(scales),
        });
    }
    let lse = tape.logsumexp_rows(logits);
    let log_weights = tape.sub(logits, lse)?;
    let t = tape.column(target);
    let r = tape.sub(t, means)?;
    let z = tape.div(r, scales)?;
    let z2 = tape.square(z);
    let log_scale = tape.log(scales)?;
    let quad = tape.affine(z2, -0.5, -HALF_LN_2PI);
    let log_density = tape.sub(quad, log_scale)?;
    let joint = tape.add(log_weights, log_density)?;
    let per_sample = tape.logsumexp_rows(joint);
    let mean = tape.mean(per_sample);
    let loss = tape.neg(mean);
    if !tape.scalar_value(loss).is_finite() {
        return Err(Error::Diverged(format!(
            "mixture NLL is {}",
            tape.scalar_value(loss)
        )));
    }
    Ok(loss)
}

/// Mean over samples and levels of `max(tau * r, (tau - 1) * r)` with
/// `r = y - q_tau`, written as `0.5 |r| + (tau - 0.5) r`.
pub fn pinball_loss(tape: &mut Tape, quantiles: Var, target: &[f64], levels: &[f64]) -> Result<Var> {
    let shape = tape.shape(quantiles);
    if target.is_empty() || shape != (target.len(), levels.len()) {
        return Err(Error::Shape {
            op: "pinball_loss",
            lhs: shape,
            rhs: (target.len(), levels.len()),
        });
    }
    let t = tape.column(target);
    let r = tape.sub(t, quantiles)?;
    let abs = tape.abs(r);
    let half_abs = tape.affine(abs, 0.5, 0.0);
    let tilt: Vec<f64> = levels.iter().map(|tau| tau - 0.5).collect();
    let tilt = tape.row(&tilt);
    let tilted = tape.mul(r, tilt)?;
    let per = tape.add(half_abs, tilted)?;
    Ok(tape.mean(per))
}

/// Convenience for tests and tools: evaluate a tape-built loss on plain data.
pub fn evaluate<F>(pred: &[f64], build: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let p = tape.leaf(Matrix::from_shape_vec((pred.len(), 1), pred.to_vec()).unwrap());
    let out = build(&mut tape, p)?;
    Ok(tape.scalar_value(out))
}
