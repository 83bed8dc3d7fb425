//! TOML experiment files.
//!
//! ```toml
//! schema_version = 1
//!
//! [run]
//! seed = 1
//! epochs = 50
//!
//! [data]
//! kind = "two-path"
//! n = 5000
//!
//! [loss]
//! family = "composite-wasserstein"
//! variant = "default"
//!
//! [sweep]
//! separation = [0.0, 0.5, 1.0]
//! seeds = 5
//! ```
//!
//! Every section except `[data]` and `[loss]` is optional and unknown keys are
//! rejected. See the README for the full key list.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::DataKind;
use crate::error::{Error, Result};
use crate::losses::{LossFamily, LossSpec, Variant, DEFAULT_EPSILON, DEFAULT_QUANTILES};
use crate::metrics::DEFAULT_JS_BINS;
use crate::models::{Activation, HeadKind, ModelSpec, DEFAULT_MIXTURE_COMPONENTS};
use crate::trainer::{
    head_for, DataSpec, RunConfig, SweepSpec, DEFAULT_BATCH_SIZE, DEFAULT_DENSITY_POINTS,
    DEFAULT_EPOCHS, DEFAULT_LR,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub schema_version: u32,
    #[serde(default)]
    pub run: RunSection,
    pub data: DataSpec,
    #[serde(default)]
    pub model: ModelSection,
    pub loss: LossSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub eval_cadence: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: DEFAULT_LR,
            weight_decay: 0.0,
            eval_cadence: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `[64, 32]`, GELU, dropout 0.1, no batch norm.
    #[default]
    Desk,
    /// `[512, 256, 128, 64]`, GELU, batch norm, dropout 0.3/0.3/0.2/0.2.
    Full,
}

/// Architecture overrides on top of a preset. Mixture-density losses always
/// start from the tanh mixture trunk.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: Preset,
    pub input_dim: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub dropout: Option<Vec<f64>>,
    pub batch_norm: Option<bool>,
    pub mixture_components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub family: LossFamily,
    /// Composite families only. `alpha` defaults to 1.
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub quantile_levels: Option<Vec<f64>>,
}

impl LossSection {
    pub fn resolve(&self) -> Result<LossSpec> {
        let mut spec = match (self.variant, self.family.is_composite()) {
            (Some(_), false) => {
                return Err(Error::Config(format!(
                    "`variant` only applies to composite losses, not {}",
                    self.family.label()
                )))
            }
            (Some(Variant::Default), true) if self.alpha.is_some_and(|a| a != 1.0) => {
                return Err(Error::Config("the default variant fixes alpha = 1".into()))
            }
            (Some(v), true) => {
                if self.beta.is_some() {
                    return Err(Error::Config("`beta` is implied by `variant`".into()));
                }
                LossSpec::variant(self.family, v, self.alpha.unwrap_or(1.0))
            }
            (None, true) => {
                LossSpec::composite(self.family, self.alpha.unwrap_or(1.0), self.beta.unwrap_or(0.0))
            }
            (None, false) => {
                if self.alpha.is_some() || self.beta.is_some() {
                    return Err(Error::Config(format!(
                        "alpha/beta do not apply to {} loss",
                        self.family.label()
                    )));
                }
                LossSpec::new(self.family)
            }
        };
        spec.epsilon = self.epsilon.unwrap_or(DEFAULT_EPSILON);
        spec.quantile_levels = self
            .quantile_levels
            .clone()
            .unwrap_or_else(|| DEFAULT_QUANTILES.to_vec());
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub js_bins: usize,
    pub density_points: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            js_bins: DEFAULT_JS_BINS,
            density_points: DEFAULT_DENSITY_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub separation: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub seeds: usize,
    /// `[[sweep.loss]]` tables, same keys as `[loss]`.
    pub loss: Option<Vec<LossSection>>,
}

fn one() -> usize {
    1
}

/// A parsed file: the base run plus an optional sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub run: RunConfig,
    pub sweep: Option<SweepSpec>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse an experiment file. `base_dir` anchors relative CSV paths.
pub fn parse_experiment(text: &str, base_dir: &Path) -> Result<Experiment> {
    let file: ExperimentFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        Error::Config(match line {
            Some(l) => format!("line {l}: {}", e.message()),
            None => e.message().to_string(),
        })
    })?;
    file.resolve(base_dir)
}

pub fn load_experiment(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_experiment(&text, base).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn csv_width(path: &Path, target: &str) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?;
    if !headers.iter().any(|h| h == target) {
        return Err(Error::Config(format!(
            "{}: no target column {target:?}",
            path.display()
        )));
    }
    Ok(headers.len() - 1)
}

impl ExperimentFile {
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut data = self.data.clone();
        data.validate()?;
        if let Some(csv) = &data.csv {
            if csv.is_relative() {
                data.csv = Some(base_dir.join(csv));
            }
        }
        let input_dim = match (self.model.input_dim, &data.csv, &data.feature_columns) {
            (Some(d), _, _) => d,
            (None, Some(_), Some(cols)) => cols.len(),
            (None, Some(path), None) => csv_width(path, &data.target_column)?,
            (None, None, _) => 2,
        };
        let loss = self.loss.resolve()?;
        let model = self.model.resolve(input_dim, &loss)?;
        let r = &self.run;
        let run = RunConfig {
            data,
            model,
            loss,
            epochs: r.epochs,
            batch_size: r.batch_size,
            lr: r.lr,
            weight_decay: r.weight_decay,
            seed: r.seed,
            eval_cadence: r.eval_cadence,
            js_bins: self.metrics.js_bins,
            density_points: self.metrics.density_points,
        };
        run.validate()?;
        let sweep = match &self.sweep {
            None => None,
            Some(s) => Some(SweepSpec {
                separation: s.separation.clone(),
                alpha: s.alpha.clone(),
                losses: match &s.loss {
                    None => None,
                    Some(list) => Some(list.iter().map(LossSection::resolve).collect::<Result<_>>()?),
                },
                seeds: s.seeds,
            }),
        };
        if let Some(s) = &sweep {
            if s.losses.as_ref().is_some_and(|l| l.iter().any(|l| l.family == LossFamily::MdnNll))
                && run.loss.family != LossFamily::MdnNll
            {
                return Err(Error::Config(
                    "sweep over a mixture-density loss needs a mixture base loss (its trunk differs)".into(),
                ));
            }
            s.expand(&run)?;
        }
        Ok(Experiment { run, sweep })
    }
}

impl ModelSection {
    pub fn resolve(&self, input_dim: usize, loss: &LossSpec) -> Result<ModelSpec> {
        let head = match head_for(loss) {
            HeadKind::Mixture { .. } => HeadKind::Mixture {
                components: self.mixture_components.unwrap_or(DEFAULT_MIXTURE_COMPONENTS),
            },
            other => other,
        };
        let mut spec = match (head, self.preset) {
            (HeadKind::Mixture { components }, _) => ModelSpec::mixture(input_dim, components),
            (_, Preset::Desk) => ModelSpec::desk(input_dim, head),
            (_, Preset::Full) => ModelSpec::full(input_dim, head),
        };
        if let Some(h) = &self.hidden {
            spec.hidden = h.clone();
            if self.dropout.is_none() {
                let p = spec.dropout.first().copied().unwrap_or(0.0);
                spec.dropout = vec![p; h.len()];
            }
        }
        if let Some(a) = self.activation {
            spec.activation = a;
        }
        if let Some(d) = &self.dropout {
            spec.dropout = d.clone();
        }
        if let Some(bn) = self.batch_norm {
            spec.batch_norm = bn;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parse a `--kind` value.
pub fn parse_kind(s: &str) -> Result<DataKind> {
    s.parse().map_err(Error::Config)
}

/// Default location of relative output, overridable by the CLI.
pub fn default_output_root() -> PathBuf {
    std::env::var_os("DISTREG_OUTPUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}
