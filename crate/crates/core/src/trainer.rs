//! Seeded training runs and grid sweeps.
//!
//! A run draws every random number from named sub-streams of its seed (see
//! [`Stream`]), so two runs of the same [`RunConfig`] are bit-identical.
//! Metrics are computed on the test split in evaluation mode, in the original
//! target units; `test_loss` is the family's own objective on the
//! standardized test targets.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Adam, AdamConfig, Tape, Var};
use crate::data::{
    self, generate, inject_separation, load_csv, zscore_fit_transform, DataKind, Dataset,
    SeparationConfig, DEFAULT_SPLIT,
};
use crate::error::{Error, Result};
use crate::losses::{self, LossFamily, LossSpec};
use crate::metrics::{self, DEFAULT_JS_BINS};
use crate::models::{HeadKind, HeadOutput, HeadValues, Mode, Model, ModelSpec};
use crate::rng::{derive_seed, Rng, Stream};

pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_DENSITY_POINTS: usize = 200;

/// Where the rows come from. Exactly one of `kind` (synthetic) or `csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<DataKind>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default = "default_target_column")]
    pub target_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<String>>,
    /// Separation strength `S`; 0 leaves targets untouched.
    #[serde(default)]
    pub separation: f64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
}

fn default_n() -> usize {
    1000
}

fn default_target_column() -> String {
    "y".into()
}

fn default_split() -> [f64; 3] {
    DEFAULT_SPLIT
}

impl DataSpec {
    pub fn generated(kind: DataKind, n: usize) -> Self {
        DataSpec {
            kind: Some(kind),
            n,
            noise_sd: None,
            csv: None,
            target_column: default_target_column(),
            feature_columns: None,
            separation: 0.0,
            split: DEFAULT_SPLIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.kind, &self.csv) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(Error::Config("data needs exactly one of `kind` or `csv`".into())),
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return Err(Error::Config(format!("separation {} outside [0, 1]", self.separation)));
        }
        if self.kind.is_some() && self.n < 20 {
            return Err(Error::Config(format!("n = {} is too small to split", self.n)));
        }
        Ok(())
    }

    /// Raw rows before splitting and scaling.
    pub fn load(&self, run_seed: u64) -> Result<Dataset> {
        match (&self.kind, &self.csv) {
            (Some(kind), _) => generate(*kind, self.n, self.noise_sd, derive_seed(run_seed, Stream::Data as u64)),
            (None, Some(path)) => load_csv(path, &self.target_column, self.feature_columns.as_deref()),
            (None, None) => Err(Error::Config("data needs `kind` or `csv`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSpec,
    pub model: ModelSpec,
    pub loss: LossSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Validation RMSE is logged every `eval_cadence` epochs (and always
    /// after the last one).
    pub eval_cadence: usize,
    pub js_bins: usize,
    pub density_points: usize,
}

impl RunConfig {
    /// Defaults: 50 epochs, batch 64, Adam lr 1e-3, no weight decay.
    pub fn new(data: DataSpec, model: ModelSpec, loss: LossSpec, seed: u64) -> Self {
        RunConfig {
            data,
            model,
            loss,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: DEFAULT_LR,
            weight_decay: 0.0,
            seed,
            eval_cadence: 1,
            js_bins: DEFAULT_JS_BINS,
            density_points: DEFAULT_DENSITY_POINTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.loss.validate()?;
        check_head(self.model.head, &self.loss)?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 || (self.model.batch_norm && self.batch_size < 2) {
            return Err(Error::Config(format!(
                "batch_size {} is invalid (batch norm needs >= 2)",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr must be > 0 and weight_decay >= 0".into()));
        }
        if self.eval_cadence == 0 || self.js_bins == 0 || self.density_points < 2 {
            return Err(Error::Config(
                "eval_cadence and js_bins must be >= 1, density_points >= 2".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 (hex) of the canonical JSON form: object keys sorted, no
    /// whitespace. Field order in a config file does not affect it.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("run config serializes");
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn label(&self) -> String {
        self.loss.label()
    }
}

/// Head/loss compatibility.
pub fn check_head(head: HeadKind, loss: &LossSpec) -> Result<()> {
    let ok = match (head, loss.family) {
        (HeadKind::Scalar, f) => f.is_composite() || f == LossFamily::Mse,
        (HeadKind::Gaussian, LossFamily::GaussianNll) => true,
        (HeadKind::Quantile { count }, LossFamily::Pinball) => count == loss.quantile_levels.len(),
        (HeadKind::Mixture { .. }, LossFamily::MdnNll) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "head {head:?} cannot be trained with {} loss",
            loss.family.label()
        )))
    }
}

/// The head a loss family needs.
pub fn head_for(loss: &LossSpec) -> HeadKind {
    match loss.family {
        LossFamily::GaussianNll => HeadKind::Gaussian,
        LossFamily::Pinball => HeadKind::Quantile {
            count: loss.quantile_levels.len(),
        },
        LossFamily::MdnNll => HeadKind::Mixture {
            components: crate::models::DEFAULT_MIXTURE_COMPONENTS,
        },
        _ => HeadKind::Scalar,
    }
}

/// Build the family's objective on a forward pass.
pub fn loss_graph(tape: &mut Tape, head: HeadOutput, target: &[f64], spec: &LossSpec) -> Result<Var> {
    match (head, spec.family) {
        (HeadOutput::Scalar(p), LossFamily::Mse) => losses::mse_loss(tape, p, target),
        (HeadOutput::Scalar(p), f) if f.is_composite() => losses::composite_loss(tape, p, target, spec),
        (HeadOutput::Gaussian { mean, log_var }, LossFamily::GaussianNll) => {
            losses::gaussian_nll(tape, mean, log_var, target)
        }
        (HeadOutput::Quantile(q), LossFamily::Pinball) => {
            losses::pinball_loss(tape, q, target, &spec.quantile_levels)
        }
        (HeadOutput::Mixture { logits, means, scales }, LossFamily::MdnNll) => {
            losses::mdn_nll(tape, logits, means, scales, target)
        }
        (head, family) => Err(Error::Config(format!(
            "head output {head:?} does not fit {} loss",
            family.label()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub wasserstein: f64,
    pub js: f64,
    pub bc_target: f64,
    pub bc_pred: f64,
    pub delta_bc: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub batch: usize,
}

/// How the run was carried out, recorded for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub split: [f64; 3],
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    pub shuffle: String,
    pub last_batch: String,
    pub metric_units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub family: LossFamily,
    pub config_hash: String,
    pub seed: u64,
    pub diverged: bool,
    pub divergence: Option<Divergence>,
    /// `None` only when the run diverged.
    pub metrics: Option<TestMetrics>,
    pub val_rmse: Option<f64>,
    pub final_train_loss: Option<f64>,
    /// Largest composite mini-batch loss seen; `None` for other families.
    pub max_composite_loss: Option<f64>,
    pub separation: Option<SeparationConfig>,
    pub checkpoint_hash: String,
    pub protocol: Protocol,
    /// Seconds; excluded from the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub max_batch_loss: f64,
    pub batches: usize,
    pub val_rmse: Option<f64>,
}

/// Target and predicted densities on a shared grid (original units).
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: Vec<f64>,
    pub target: Vec<f64>,
    pub pred: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub report: MetricsReport,
    pub epochs: Vec<EpochRecord>,
    /// `None` when the run diverged.
    pub density: Option<Density>,
    /// Test targets and the predictive sample, original units.
    pub test_targets: Vec<f64>,
    pub predictive_sample: Vec<f64>,
}

/// Data after generation, splitting, separation and scaling.
pub fn prepare_data(run: &RunConfig) -> Result<(Dataset, Option<SeparationConfig>)> {
    let raw = run.data.load(run.seed)?;
    let ds = data::split(&raw, run.data.split, derive_seed(run.seed, Stream::Split as u64))?;
    let (ds, sep) = if run.data.separation > 0.0 {
        let (ds, cfg) = inject_separation(&ds, run.data.separation)?;
        (ds, Some(cfg))
    } else {
        (ds, None)
    };
    Ok((zscore_fit_transform(&ds)?, sep))
}

fn original_units(ds: &Dataset, values: &[f64]) -> Vec<f64> {
    data::zscore_inverse(values, ds.scaler_y.as_ref().expect("scaled dataset"))
}

fn values_finite(v: &HeadValues) -> bool {
    match v {
        HeadValues::Scalar(p) => p.iter().all(|x| x.is_finite()),
        HeadValues::Gaussian { mean, log_var } => mean.iter().chain(log_var).all(|x| x.is_finite()),
        HeadValues::Quantile(q) => q.iter().all(|x| x.is_finite()),
        HeadValues::Mixture { logits, means, scales } => {
            logits.iter().chain(means).chain(scales).all(|x| x.is_finite())
        }
    }
}

/// Gaussian-kernel densities of both samples on a grid covering their joint
/// range plus 10% padding. A zero Scott bandwidth (constant sample) falls back
/// to 1% of the grid span.
pub fn density(target: &[f64], pred: &[f64], points: usize) -> Result<Density> {
    let lo = target.iter().chain(pred).copied().fold(f64::INFINITY, f64::min);
    let hi = target.iter().chain(pred).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-6);
    let grid = metrics::linspace(lo - pad, hi + pad, points);
    let span = hi - lo + 2.0 * pad;
    let bw = |s: &[f64]| {
        let b = metrics::scott_bandwidth(s);
        if b > 0.0 {
            b
        } else {
            0.01 * span
        }
    };
    Ok(Density {
        target: metrics::kde_density(target, &grid, bw(target))?,
        pred: metrics::kde_density(pred, &grid, bw(pred))?,
        grid,
    })
}

enum Step {
    Loss(f64),
    Diverged,
}

fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    ds: &Dataset,
    batch: &[usize],
    run: &RunConfig,
    rng: &mut Rng,
) -> Result<Step> {
    let x = ds.rows(batch);
    let y = ds.targets_at(batch);
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &x, Mode::Train, rng)?;
    let loss = match loss_graph(&mut tape, fwd.head, &y, &run.loss) {
        Ok(l) => l,
        Err(Error::Diverged(_)) => return Ok(Step::Diverged),
        Err(e) => return Err(e),
    };
    let value = tape.scalar_value(loss);
    if !value.is_finite() {
        return Ok(Step::Diverged);
    }
    if run.loss.family.is_composite() && !(0.0..run.loss.composite_bound()).contains(&value) {
        return Err(Error::contract(format!(
            "composite loss {value} outside [0, {})",
            run.loss.composite_bound()
        )));
    }
    tape.backward(loss)?;
    model.accumulate_grads(&tape, &fwd);
    adam.step(&mut model.params_mut());
    Ok(Step::Loss(value))
}

fn split_rmse(model: &Model, ds: &Dataset, rows: &[usize], levels: &[f64]) -> Result<Option<f64>> {
    let values = model.predict(&ds.rows(rows))?;
    if !values_finite(&values) {
        return Ok(None);
    }
    let pred = original_units(ds, &values.point(levels));
    let target = original_units(ds, &ds.targets_at(rows));
    Ok(Some(metrics::rmse(&pred, &target)?))
}

/// Train one model and evaluate it on the test split.
///
/// Configuration problems (including a head that does not fit the loss) are
/// returned as errors before any training. A non-finite loss stops the run
/// and is reported through [`MetricsReport::diverged`].
pub fn train(run: &RunConfig) -> Result<TrainOutcome> {
    let started = Instant::now();
    run.validate()?;
    let (ds, separation) = prepare_data(run)?;
    if ds.dim() != run.model.input_dim {
        return Err(Error::Config(format!(
            "model input_dim {} but data has {} feature columns",
            run.model.input_dim,
            ds.dim()
        )));
    }
    let split = ds.split.clone().expect("prepared data is split");
    let mut model = Model::build(&run.model, &mut Rng::for_stream(run.seed, Stream::Init))?;
    let mut adam = Adam::new(AdamConfig {
        lr: run.lr,
        weight_decay: run.weight_decay,
        ..AdamConfig::default()
    });
    let mut batch_rng = Rng::for_stream(run.seed, Stream::Batches);
    let drop_last = run.model.batch_norm;
    let levels = &run.loss.quantile_levels;

    let mut order = split.train.clone();
    let mut epochs = Vec::with_capacity(run.epochs);
    let mut divergence = None;
    let mut max_composite: Option<f64> = None;
    'epochs: for epoch in 1..=run.epochs {
        batch_rng.shuffle(&mut order);
        let (mut total, mut max_loss, mut count) = (0.0, f64::NEG_INFINITY, 0);
        for (b, batch) in order.chunks(run.batch_size).enumerate() {
            if drop_last && batch.len() < run.batch_size {
                continue;
            }
            match train_step(&mut model, &mut adam, &ds, batch, run, &mut batch_rng)? {
                Step::Loss(v) => {
                    total += v;
                    max_loss = max_loss.max(v);
                    count += 1;
                }
                Step::Diverged => {
                    divergence = Some(Divergence { epoch, batch: b });
                    break 'epochs;
                }
            }
        }
        if run.loss.family.is_composite() && count > 0 {
            max_composite = Some(max_composite.map_or(max_loss, |m| m.max(max_loss)));
        }
        let val_rmse = if epoch % run.eval_cadence == 0 || epoch == run.epochs {
            match split_rmse(&model, &ds, &split.val, levels)? {
                Some(v) => Some(v),
                None => {
                    divergence = Some(Divergence { epoch, batch: count });
                    break 'epochs;
                }
            }
        } else {
            None
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: if count > 0 { total / count as f64 } else { f64::NAN },
            max_batch_loss: max_loss,
            batches: count,
            val_rmse,
        });
    }

    let protocol = Protocol {
        split: run.data.split,
        train_rows: split.train.len(),
        val_rows: split.val.len(),
        test_rows: split.test.len(),
        shuffle: "seeded reshuffle of training rows every epoch".into(),
        last_batch: if drop_last {
            "incomplete last batch dropped (batch norm)".into()
        } else {
            "incomplete last batch kept".into()
        },
        metric_units: "metrics in original target units; test_loss on standardized targets".into(),
    };
    let mut report = MetricsReport {
        label: run.label(),
        family: run.loss.family,
        config_hash: run.hash(),
        seed: run.seed,
        diverged: divergence.is_some(),
        divergence,
        metrics: None,
        val_rmse: None,
        final_train_loss: epochs.last().map(|e| e.train_loss).filter(|v| v.is_finite()),
        max_composite_loss: max_composite,
        separation,
        checkpoint_hash: model.checkpoint_hash(),
        protocol,
        wall_time_s: 0.0,
    };
    let test_targets = original_units(&ds, &ds.targets_at(&split.test));
    if report.diverged {
        report.wall_time_s = started.elapsed().as_secs_f64();
        return Ok(TrainOutcome {
            model,
            report,
            epochs,
            density: None,
            test_targets,
            predictive_sample: Vec::new(),
        });
    }

    let x_test = ds.rows(&split.test);
    let y_test_z = ds.targets_at(&split.test);
    let mut tape = Tape::new();
    let fwd = model.forward_eval(&mut tape, &x_test)?;
    let test_loss = match loss_graph(&mut tape, fwd.head, &y_test_z, &run.loss) {
        Ok(l) => tape.scalar_value(l),
        Err(Error::Diverged(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let values = model.predict(&x_test)?;
    if !test_loss.is_finite() || !values_finite(&values) {
        report.diverged = true;
        report.divergence = Some(Divergence {
            epoch: run.epochs,
            batch: 0,
        });
        report.wall_time_s = started.elapsed().as_secs_f64();
        return Ok(TrainOutcome {
            model,
            report,
            epochs,
            density: None,
            test_targets,
            predictive_sample: Vec::new(),
        });
    }
    let point = original_units(&ds, &values.point(levels));
    let sample = original_units(
        &ds,
        &values.predictive_sample(&mut Rng::for_stream(run.seed, Stream::Predictive)),
    );
    let bc_target = metrics::bimodality_of(&test_targets)?;
    let bc_pred = metrics::bimodality_of(&sample)?;
    report.metrics = Some(TestMetrics {
        rmse: metrics::rmse(&point, &test_targets)?,
        mae: metrics::mae(&point, &test_targets)?,
        wasserstein: metrics::exact_wasserstein(&sample, &test_targets)?,
        js: metrics::js_divergence(&test_targets, &sample, run.js_bins)?,
        bc_target,
        bc_pred,
        delta_bc: (bc_target - bc_pred).abs(),
        test_loss,
    });
    report.val_rmse = split_rmse(&model, &ds, &split.val, levels)?;
    let density = density(&test_targets, &sample, run.density_points)?;
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        model,
        report,
        epochs,
        density: Some(density),
        test_targets,
        predictive_sample: sample,
    })
}

/// Grid axes; unset axes keep the base config's value. Seeds are always an
/// axis: grid point `i` of the seed axis uses `derive_seed(base.seed, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<Vec<f64>>,
    /// Sets `alpha` of the loss; `beta` is left unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses: Option<Vec<LossSpec>>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
}

fn default_seeds() -> usize {
    1
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            separation: None,
            alpha: None,
            losses: None,
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Index of the aggregate row (all seeds of one configuration share it).
    pub config_index: usize,
    pub separation: f64,
    pub alpha: f64,
    pub loss_label: String,
    pub seed_index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub point: GridPoint,
    pub run: RunConfig,
    /// `Err` holds the message of a run that failed outright.
    pub report: std::result::Result<MetricsReport, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub separation: f64,
    pub alpha: f64,
    pub loss_label: String,
    pub runs: usize,
    pub diverged: usize,
    pub failed: usize,
    pub rmse: Option<Stat>,
    pub mae: Option<Stat>,
    pub wasserstein: Option<Stat>,
    pub js: Option<Stat>,
    pub bc_target: Option<Stat>,
    pub bc_pred: Option<Stat>,
    pub delta_bc: Option<Stat>,
    pub test_loss: Option<Stat>,
    pub val_rmse: Option<Stat>,
}

impl SweepSpec {
    /// Every grid point in a fixed order: loss, then separation, then alpha,
    /// then seed.
    pub fn expand(&self, base: &RunConfig) -> Result<Vec<(GridPoint, RunConfig)>> {
        if self.seeds == 0 {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        let empty = |axis: &Option<Vec<_>>| axis.as_ref().is_some_and(|v: &Vec<_>| v.is_empty());
        if empty(&self.separation) || empty(&self.alpha) || self.losses.as_ref().is_some_and(|v| v.is_empty())
        {
            return Err(Error::Config("sweep axes must be non-empty".into()));
        }
        let losses = self.losses.clone().unwrap_or_else(|| vec![base.loss.clone()]);
        let seps = self.separation.clone().unwrap_or_else(|| vec![base.data.separation]);
        let mut out = Vec::new();
        let mut config_index = 0;
        for loss in &losses {
            let alphas = self.alpha.clone().unwrap_or_else(|| vec![loss.alpha]);
            for &s in &seps {
                for &a in &alphas {
                    for i in 0..self.seeds {
                        let mut run = base.clone();
                        run.loss = loss.clone();
                        run.loss.alpha = a;
                        run.model.head = head_for(&run.loss);
                        run.data.separation = s;
                        run.seed = derive_seed(base.seed, i as u64);
                        out.push((
                            GridPoint {
                                config_index,
                                separation: s,
                                alpha: a,
                                loss_label: run.label(),
                                seed_index: i,
                                seed: run.seed,
                            },
                            run,
                        ));
                    }
                    config_index += 1;
                }
            }
        }
        Ok(out)
    }
}

/// Run every grid point on up to `jobs` worker threads. Results come back in
/// grid order regardless of scheduling. A failed or diverged run is recorded
/// and the sweep continues.
pub fn sweep(base: &RunConfig, spec: &SweepSpec, jobs: usize) -> Result<Vec<SweepRun>> {
    let points = spec.expand(base)?;
    for (_, run) in &points {
        run.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .into_par_iter()
            .map(|(point, run)| {
                let report = train(&run).map(|o| o.report).map_err(|e| e.to_string());
                SweepRun { point, run, report }
            })
            .collect()
    }))
}

fn stat(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    Some(Stat {
        mean: v.iter().sum::<f64>() / n as f64,
        median,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    stat(values).map(|s| s.median)
}

/// Per-configuration mean and median over seeds, in grid order. Diverged and
/// failed runs are counted but excluded from the statistics.
pub fn aggregate(runs: &[SweepRun]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = Vec::new();
    let mut groups: Vec<Vec<&SweepRun>> = Vec::new();
    for r in runs {
        let idx = r.point.config_index;
        if groups.len() <= idx {
            groups.resize_with(idx + 1, Vec::new);
        }
        groups[idx].push(r);
    }
    for group in groups.into_iter().filter(|g| !g.is_empty()) {
        let first = &group[0].point;
        let ok: Vec<&TestMetrics> = group
            .iter()
            .filter_map(|r| r.report.as_ref().ok().and_then(|rep| rep.metrics.as_ref()))
            .collect();
        let pick = |f: fn(&TestMetrics) -> f64| stat(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
        let val: Vec<f64> = group
            .iter()
            .filter_map(|r| r.report.as_ref().ok().and_then(|rep| rep.val_rmse))
            .collect();
        rows.push(AggregateRow {
            separation: first.separation,
            alpha: first.alpha,
            loss_label: first.loss_label.clone(),
            runs: group.len(),
            diverged: group
                .iter()
                .filter(|r| r.report.as_ref().is_ok_and(|rep| rep.diverged))
                .count(),
            failed: group.iter().filter(|r| r.report.is_err()).count(),
            rmse: pick(|m| m.rmse),
            mae: pick(|m| m.mae),
            wasserstein: pick(|m| m.wasserstein),
            js: pick(|m| m.js),
            bc_target: pick(|m| m.bc_target),
            bc_pred: pick(|m| m.bc_pred),
            delta_bc: pick(|m| m.delta_bc),
            test_loss: pick(|m| m.test_loss),
            val_rmse: stat(&val),
        });
    }
    rows
}
