use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::Result;
use crate::rng::Rng;

pub const DEFAULT_TWO_PATH_RADIUS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    InverseSquare,
    TwoPath,
    UnimodalLinear,
}

impl DataKind {
    pub fn default_noise_sd(self) -> f64 {
        match self {
            DataKind::InverseSquare => 0.5,
            DataKind::TwoPath => 0.3,
            DataKind::UnimodalLinear => 1.0,
        }
    }
}

impl std::str::FromStr for DataKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inverse-square" => Ok(DataKind::InverseSquare),
            "two-path" => Ok(DataKind::TwoPath),
            "unimodal-linear" => Ok(DataKind::UnimodalLinear),
            other => Err(format!(
                "unknown dataset kind {other:?} (expected inverse-square, two-path or unimodal-linear)"
            )),
        }
    }
}

fn build(n: usize, mut row: impl FnMut() -> (f64, f64, f64)) -> Result<Dataset> {
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (x0, x1, t) = row();
        x[[i, 0]] = x0;
        x[[i, 1]] = x1;
        y.push(t);
    }
    Dataset::new(x, y)
}

/// `y ~ U[-3, 3]`, `x0 = y^2 + noise`, `x1 ~ N(0, 1)` independent of `y`.
pub fn gen_inverse_square(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed);
    build(n, || {
        let y = rng.uniform_range(-3.0, 3.0);
        let x0 = y * y + noise_sd * rng.normal();
        let x1 = rng.normal();
        (x0, x1, y)
    })
}

/// Noisy circle: `phi ~ U[0, 2pi]`, `x0 = r cos(phi) + e_x`,
/// `y = r sin(phi) + e_y`, and an independent `N(0, 1)` channel `x1`.
pub fn gen_two_path(n: usize, radius: f64, noise_sd: f64, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed);
    build(n, || {
        let phi = rng.uniform_range(0.0, 2.0 * PI);
        let x0 = radius * phi.cos() + noise_sd * rng.normal();
        let y = radius * phi.sin() + noise_sd * rng.normal();
        let x1 = rng.normal();
        (x0, x1, y)
    })
}

/// Unimodal control: `x0, x1 ~ N(0, 1)`, `y = 3 x0 + noise`.
pub fn gen_unimodal_linear(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed);
    build(n, || {
        let x0 = rng.normal();
        let x1 = rng.normal();
        let y = 3.0 * x0 + noise_sd * rng.normal();
        (x0, x1, y)
    })
}

pub fn generate(kind: DataKind, n: usize, noise_sd: Option<f64>, seed: u64) -> Result<Dataset> {
    let sd = noise_sd.unwrap_or(kind.default_noise_sd());
    match kind {
        DataKind::InverseSquare => gen_inverse_square(n, sd, seed),
        DataKind::TwoPath => gen_two_path(n, DEFAULT_TWO_PATH_RADIUS, sd, seed),
        DataKind::UnimodalLinear => gen_unimodal_linear(n, sd, seed),
    }
}
