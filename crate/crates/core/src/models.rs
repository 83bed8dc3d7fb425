//! MLP trunk with interchangeable output heads.
//!
//! Hidden layer order is `Linear -> BatchNorm (optional) -> activation ->
//! Dropout`. Dropout is inverted (kept activations are scaled by `1/(1-p)`),
//! so evaluation needs no rescaling.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Matrix, Param, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Lower bound added to mixture scales on top of `elu(s) + 1`.
pub const MIXTURE_SCALE_FLOOR: f64 = 1e-6;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const DEFAULT_MIXTURE_COMPONENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum HeadKind {
    Scalar,
    /// Mean and log-variance.
    Gaussian,
    Quantile { count: usize },
    /// Mixing logits, means and pre-activation scales for each component.
    Mixture { components: usize },
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Scalar => 1,
            HeadKind::Gaussian => 2,
            HeadKind::Quantile { count } => count,
            HeadKind::Mixture { components } => 3 * components,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: Vec<f64>,
    pub batch_norm: bool,
    pub head: HeadKind,
}

impl ModelSpec {
    /// Small CPU-friendly trunk: `[64, 32]`, GELU, dropout 0.1, no batch norm.
    pub fn desk(input_dim: usize, head: HeadKind) -> Self {
        ModelSpec {
            input_dim,
            hidden: vec![64, 32],
            activation: Activation::Gelu,
            dropout: vec![0.1, 0.1],
            batch_norm: false,
            head,
        }
    }

    /// Full-size probe: `[512, 256, 128, 64]` with batch norm, GELU and
    /// dropout 0.3/0.3/0.2/0.2.
    pub fn full(input_dim: usize, head: HeadKind) -> Self {
        ModelSpec {
            input_dim,
            hidden: vec![512, 256, 128, 64],
            activation: Activation::Gelu,
            dropout: vec![0.3, 0.3, 0.2, 0.2],
            batch_norm: true,
            head,
        }
    }

    /// Mixture-network trunk: two tanh layers, no batch norm or dropout.
    pub fn mixture(input_dim: usize, components: usize) -> Self {
        ModelSpec {
            input_dim,
            hidden: vec![64, 32],
            activation: Activation::Tanh,
            dropout: vec![0.0, 0.0],
            batch_norm: false,
            head: HeadKind::Mixture { components },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) || self.head.outputs() == 0 {
            return Err(Error::Config(format!(
                "layer widths must be >= 1 (input {}, hidden {:?}, head {:?})",
                self.input_dim, self.hidden, self.head
            )));
        }
        if self.dropout.len() != self.hidden.len() {
            return Err(Error::Config(format!(
                "{} dropout rates for {} hidden layers",
                self.dropout.len(),
                self.hidden.len()
            )));
        }
        if let Some(p) = self.dropout.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    /// Kaiming-uniform weights with bound `sqrt(6 / fan_in)`, zero bias.
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = Matrix::from_shape_simple_fn((fan_in, fan_out), || rng.uniform_range(-bound, bound));
        Dense {
            weight: Param::new(w),
            bias: Param::new(Matrix::zeros((1, fan_out))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Matrix::ones((1, width))),
            beta: Param::new(Matrix::zeros((1, width))),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }
}

/// Graph nodes produced by a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadOutput {
    Scalar(Var),
    Gaussian { mean: Var, log_var: Var },
    Quantile(Var),
    Mixture { logits: Var, means: Var, scales: Var },
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub head: HeadOutput,
    /// Tape leaves for each parameter, in [`Model::params`] order.
    bindings: Vec<Var>,
}

/// Plain-valued head outputs for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadValues {
    Scalar(Vec<f64>),
    Gaussian { mean: Vec<f64>, log_var: Vec<f64> },
    Quantile(Array2<f64>),
    Mixture { logits: Array2<f64>, means: Array2<f64>, scales: Array2<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    hidden: Vec<Dense>,
    norms: Vec<Option<BatchNorm>>,
    output: Dense,
}

struct BatchStats {
    layer: usize,
    mean: Array1<f64>,
    var_unbiased: Array1<f64>,
}

fn column_vec(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).column(0).to_vec()
}

impl Model {
    pub fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut hidden = Vec::with_capacity(spec.hidden.len());
        let mut norms = Vec::with_capacity(spec.hidden.len());
        let mut fan_in = spec.input_dim;
        for &width in &spec.hidden {
            hidden.push(Dense::init(fan_in, width, rng));
            norms.push(spec.batch_norm.then(|| BatchNorm::new(width)));
            fan_in = width;
        }
        let output = Dense::init(fan_in, spec.head.outputs(), rng);
        Ok(Model {
            spec: spec.clone(),
            hidden,
            norms,
            output,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Trainable parameters: per hidden layer weight, bias and (with batch
    /// norm) gamma, beta; then the output weight and bias.
    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for (dense, norm) in self.hidden.iter().zip(&self.norms) {
            out.push(&dense.weight);
            out.push(&dense.bias);
            if let Some(bn) = norm {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out.push(&self.output.weight);
        out.push(&self.output.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for (dense, norm) in self.hidden.iter_mut().zip(&mut self.norms) {
            out.push(&mut dense.weight);
            out.push(&mut dense.bias);
            if let Some(bn) = norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, norm) in self.norms.iter().enumerate() {
            out.push(format!("hidden.{i}.weight"));
            out.push(format!("hidden.{i}.bias"));
            if norm.is_some() {
                out.push(format!("hidden.{i}.bn.gamma"));
                out.push(format!("hidden.{i}.bn.beta"));
            }
        }
        out.push("output.weight".into());
        out.push("output.bias".into());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for p in self.params_mut() {
            p.value.iter_mut().for_each(|v| *v = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.norms.iter().flatten()
    }

    /// Fold tape gradients into the parameters after `backward`.
    pub fn accumulate_grads(&mut self, tape: &Tape, forward: &Forward) {
        for (p, &v) in self.params_mut().into_iter().zip(&forward.bindings) {
            p.accumulate(tape, v);
        }
    }

    /// Build the forward graph. In [`Mode::Train`] dropout masks are drawn
    /// from `rng` and batch-norm running statistics are updated; in
    /// [`Mode::Eval`] the model is left untouched and `rng` is not used.
    pub fn forward(&mut self, tape: &mut Tape, x: &Array2<f64>, mode: Mode, rng: &mut Rng) -> Result<Forward> {
        let (fwd, stats) = self.graph(tape, x, mode, Some(rng))?;
        for s in stats {
            let bn = self.norms[s.layer].as_mut().expect("stats only for batch-norm layers");
            let m = bn.momentum;
            bn.running_mean = &bn.running_mean * (1.0 - m) + &s.mean * m;
            bn.running_var = &bn.running_var * (1.0 - m) + &s.var_unbiased * m;
        }
        Ok(fwd)
    }

    /// Evaluation-mode forward pass on an existing tape.
    pub fn forward_eval(&self, tape: &mut Tape, x: &Array2<f64>) -> Result<Forward> {
        Ok(self.graph(tape, x, Mode::Eval, None)?.0)
    }

    /// Evaluation-mode head outputs as plain values.
    pub fn predict(&self, x: &Array2<f64>) -> Result<HeadValues> {
        let mut tape = Tape::new();
        let fwd = self.forward_eval(&mut tape, x)?;
        Ok(match fwd.head {
            HeadOutput::Scalar(v) => HeadValues::Scalar(column_vec(&tape, v)),
            HeadOutput::Gaussian { mean, log_var } => HeadValues::Gaussian {
                mean: column_vec(&tape, mean),
                log_var: column_vec(&tape, log_var),
            },
            HeadOutput::Quantile(q) => HeadValues::Quantile(tape.value(q).clone()),
            HeadOutput::Mixture { logits, means, scales } => HeadValues::Mixture {
                logits: tape.value(logits).clone(),
                means: tape.value(means).clone(),
                scales: tape.value(scales).clone(),
            },
        })
    }

    fn graph(
        &self,
        tape: &mut Tape,
        x: &Array2<f64>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
    ) -> Result<(Forward, Vec<BatchStats>)> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Shape {
                op: "model input",
                lhs: (x.nrows(), x.ncols()),
                rhs: (x.nrows(), self.spec.input_dim),
            });
        }
        let n = x.nrows();
        if mode == Mode::Train && self.spec.batch_norm && n < 2 {
            return Err(Error::contract("batch norm in train mode needs at least 2 rows"));
        }
        let mut bindings = Vec::new();
        let mut stats = Vec::new();
        let mut h = tape.leaf(x.clone());
        for (layer, (dense, norm)) in self.hidden.iter().zip(&self.norms).enumerate() {
            let w = dense.weight.bind(tape);
            let b = dense.bias.bind(tape);
            bindings.extend([w, b]);
            let z = tape.matmul(h, w)?;
            let mut z = tape.add(z, b)?;
            if let Some(bn) = norm {
                let gamma = bn.gamma.bind(tape);
                let beta = bn.beta.bind(tape);
                bindings.extend([gamma, beta]);
                let normalized = match mode {
                    Mode::Train => {
                        let mean = tape.mean_rows(z);
                        let centered = tape.sub(z, mean)?;
                        let sq = tape.square(centered);
                        let var = tape.mean_rows(sq);
                        let shifted = tape.affine(var, 1.0, bn.eps);
                        let sd = tape.sqrt(shifted)?;
                        let bessel = n as f64 / (n as f64 - 1.0);
                        stats.push(BatchStats {
                            layer,
                            mean: tape.value(mean).row(0).to_owned(),
                            var_unbiased: tape.value(var).row(0).mapv(|v| v * bessel),
                        });
                        tape.div(centered, sd)?
                    }
                    Mode::Eval => {
                        let mean = tape.row(&bn.running_mean.to_vec());
                        let inv_sd: Vec<f64> =
                            bn.running_var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
                        let inv_sd = tape.row(&inv_sd);
                        let centered = tape.sub(z, mean)?;
                        tape.mul(centered, inv_sd)?
                    }
                };
                let scaled = tape.mul(normalized, gamma)?;
                z = tape.add(scaled, beta)?;
            }
            h = match self.spec.activation {
                Activation::Gelu => tape.gelu(z),
                Activation::Tanh => tape.tanh(z),
            };
            let p = self.spec.dropout[layer];
            if mode == Mode::Train && p > 0.0 {
                let rng = rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::contract("train-mode forward needs an rng"))?;
                let keep = 1.0 / (1.0 - p);
                let (r, c) = tape.shape(h);
                let mask = Matrix::from_shape_simple_fn((r, c), || if rng.uniform() < p { 0.0 } else { keep });
                let mask = tape.leaf(mask);
                h = tape.mul(h, mask)?;
            }
        }
        let w = self.output.weight.bind(tape);
        let b = self.output.bias.bind(tape);
        bindings.extend([w, b]);
        let out = tape.matmul(h, w)?;
        let out = tape.add(out, b)?;
        let head = match self.spec.head {
            HeadKind::Scalar => HeadOutput::Scalar(out),
            HeadKind::Gaussian => HeadOutput::Gaussian {
                mean: tape.columns(out, 0, 1)?,
                log_var: tape.columns(out, 1, 1)?,
            },
            HeadKind::Quantile { .. } => HeadOutput::Quantile(out),
            HeadKind::Mixture { components: k } => {
                let logits = tape.columns(out, 0, k)?;
                let means = tape.columns(out, k, k)?;
                let pre = tape.columns(out, 2 * k, k)?;
                let e = tape.elu(pre);
                let scales = tape.affine(e, 1.0, 1.0 + MIXTURE_SCALE_FLOOR);
                HeadOutput::Mixture { logits, means, scales }
            }
        };
        Ok((Forward { head, bindings }, stats))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = BTreeMap::new();
        for (name, p) in self.param_names().into_iter().zip(self.params()) {
            tensors.insert(name, Tensor::from_matrix(&p.value));
        }
        for (i, norm) in self.norms.iter().enumerate() {
            if let Some(bn) = norm {
                tensors.insert(format!("hidden.{i}.bn.running_mean"), Tensor::from_row(&bn.running_mean));
                tensors.insert(format!("hidden.{i}.bn.running_var"), Tensor::from_row(&bn.running_var));
            }
        }
        Checkpoint {
            spec: self.spec.clone(),
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut model = Model::build(&ckpt.spec, &mut Rng::new(0))?;
        let get = |name: &str| {
            ckpt.tensors
                .get(name)
                .ok_or_else(|| Error::contract(format!("checkpoint is missing {name}")))
        };
        let names = model.param_names();
        for (name, p) in names.iter().zip(model.params_mut()) {
            let t = get(name)?;
            p.value = t.to_matrix((p.value.nrows(), p.value.ncols()), name)?;
        }
        for (i, norm) in model.norms.iter_mut().enumerate() {
            if let Some(bn) = norm {
                let w = bn.running_mean.len();
                let mean_name = format!("hidden.{i}.bn.running_mean");
                let var_name = format!("hidden.{i}.bn.running_var");
                bn.running_mean = get(&mean_name)?.to_matrix((1, w), &mean_name)?.row(0).to_owned();
                bn.running_var = get(&var_name)?.to_matrix((1, w), &var_name)?.row(0).to_owned();
            }
        }
        Ok(model)
    }

    /// SHA-256 of the canonical checkpoint JSON.
    pub fn checkpoint_hash(&self) -> String {
        let json = serde_json::to_vec(&self.to_checkpoint()).expect("checkpoint serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Row-major tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn from_matrix(m: &Matrix) -> Self {
        Tensor {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }

    fn from_row(v: &Array1<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    fn to_matrix(&self, shape: (usize, usize), name: &str) -> Result<Matrix> {
        if (self.rows, self.cols) != shape || self.data.len() != self.rows * self.cols {
            return Err(Error::Shape {
                op: "checkpoint tensor",
                lhs: (self.rows, self.cols),
                rhs: shape,
            })
            .map_err(|e| Error::contract(format!("{name}: {e}")));
        }
        Ok(Matrix::from_shape_vec(shape, self.data.clone()).unwrap())
    }
}

/// Model parameters keyed by layer name, plus the architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub tensors: BTreeMap<String, Tensor>,
}

/// Sort each row ascending so predicted quantiles never cross.
pub fn enforce_quantile_order(pred: &Array2<f64>) -> Array2<f64> {
    let mut out = pred.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let mut v = row.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        row.iter_mut().zip(v).for_each(|(dst, src)| *dst = src);
    }
    out
}

fn softmax_row(logits: ndarray::ArrayView1<f64>) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl HeadValues {
    pub fn len(&self) -> usize {
        match self {
            HeadValues::Scalar(v) => v.len(),
            HeadValues::Gaussian { mean, .. } => mean.len(),
            HeadValues::Quantile(q) => q.nrows(),
            HeadValues::Mixture { logits, .. } => logits.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One point prediction per row: the scalar output, the Gaussian mean,
    /// the quantile column whose level is closest to 0.5, or the mixture mean.
    pub fn point(&self, quantile_levels: &[f64]) -> Vec<f64> {
        match self {
            HeadValues::Scalar(v) => v.clone(),
            HeadValues::Gaussian { mean, .. } => mean.clone(),
            HeadValues::Quantile(q) => {
                let median = quantile_levels
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                enforce_quantile_order(q).column(median).to_vec()
            }
            HeadValues::Mixture { logits, means, .. } => logits
                .rows()
                .into_iter()
                .zip(means.rows())
                .map(|(l, m)| softmax_row(l).iter().zip(m).map(|(w, mu)| w * mu).sum())
                .collect(),
        }
    }

    /// Sample representing the predicted distribution over the whole split.
    ///
    /// Scalar heads contribute their predictions; Gaussian and mixture heads
    /// contribute one draw per row; quantile heads contribute every (ordered)
    /// quantile of every row with equal weight.
    pub fn predictive_sample(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            HeadValues::Scalar(v) => v.clone(),
            HeadValues::Gaussian { mean, log_var } => mean
                .iter()
                .zip(log_var)
                .map(|(mu, lv)| mu + (0.5 * lv).exp() * rng.normal())
                .collect(),
            HeadValues::Quantile(q) => enforce_quantile_order(q).iter().copied().collect(),
            HeadValues::Mixture { logits, means, scales } => {
                let mut out = Vec::with_capacity(logits.nrows());
                for i in 0..logits.nrows() {
                    let w = softmax_row(logits.row(i));
                    let u = rng.uniform();
                    let mut acc = 0.0;
                    let mut k = w.len() - 1;
                    for (j, wj) in w.iter().enumerate() {
                        acc += wj;
                        if u < acc {
                            k = j;
                            break;
                        }
                    }
                    out.push(means[[i, k]] + scales[[i, k]] * rng.normal());
                }
                out
            }
        }
    }
}
