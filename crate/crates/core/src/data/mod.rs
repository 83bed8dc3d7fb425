//! Everything that produces a [`Dataset`]: synthetic generators, separation
//! injection, splitting, z-score scaling and CSV ingestion.

mod csv_io;
mod separation;
mod synthetic;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use csv_io::{load_csv, write_csv};
pub use separation::{inject_separation, kmeans2_1d, KMeans2, SeparationConfig};
pub use synthetic::{
    gen_inverse_square, gen_two_path, gen_unimodal_linear, generate, DataKind,
    DEFAULT_TWO_PATH_RADIUS,
};

pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.15, 0.15];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-column z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fit on the given rows. Columns with zero spread get `std = 1`.
    pub fn fit(columns: &Array2<f64>) -> Result<Self> {
        if columns.nrows() == 0 {
            return Err(Error::contract("cannot fit a scaler on zero rows"));
        }
        let mean = columns.mean_axis(Axis(0)).unwrap();
        let std = columns.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Ok(Scaler {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    pub fn transform(&self, columns: &mut Array2<f64>) {
        for (j, mut col) in columns.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
    }

    pub fn inverse(&self, columns: &mut Array2<f64>) {
        for (j, mut col) in columns.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * self.std[j] + self.mean[j]);
        }
    }
}

/// Undo target standardization for a vector of single-column values.
pub fn zscore_inverse(values: &[f64], scaler: &Scaler) -> Vec<f64> {
    values
        .iter()
        .map(|v| v * scaler.std[0] + scaler.mean[0])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub split: Option<Split>,
    pub scaler_x: Option<Scaler>,
    pub scaler_y: Option<Scaler>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Vec<f64>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::contract(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::contract("dataset contains NaN or infinite values"));
        }
        let feature_names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            features,
            targets,
            feature_names,
            target_name: "y".into(),
            split: None,
            scaler_x: None,
            scaler_y: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Training rows, or every row when the dataset has not been split.
    pub fn train_indices(&self) -> Vec<usize> {
        match &self.split {
            Some(s) => s.train.clone(),
            None => (0..self.len()).collect(),
        }
    }

    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), indices)
    }

    pub fn targets_at(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.targets[i]).collect()
    }
}

/// Seeded uniform partition into train/val/test with the given ratios.
pub fn split(ds: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!("split ratios {ratios:?} must be >= 0 and sum to 1")));
    }
    let n = ds.len();
    let n_train = (n as f64 * ratios[0]).round() as usize;
    let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train.min(n));
    let n_test = n.saturating_sub(n_train + n_val);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::contract(format!(
            "split of {n} rows by {ratios:?} leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut out = ds.clone();
    out.split = Some(Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    });
    Ok(out)
}

/// Standardize features and targets with statistics from the training rows
/// only, then apply the same transform to every row.
pub fn zscore_fit_transform(ds: &Dataset) -> Result<Dataset> {
    let train = ds.train_indices();
    if train.is_empty() {
        return Err(Error::contract("z-score fit needs a non-empty training split"));
    }
    let scaler_x = Scaler::fit(&ds.rows(&train))?;
    let y_train = Array2::from_shape_vec((train.len(), 1), ds.targets_at(&train)).unwrap();
    let scaler_y = Scaler::fit(&y_train)?;

    let mut out = ds.clone();
    scaler_x.transform(&mut out.features);
    let mut y = Array2::from_shape_vec((ds.len(), 1), ds.targets.clone()).unwrap();
    scaler_y.transform(&mut y);
    out.targets = y.into_raw_vec_and_offset().0;
    out.scaler_x = Some(scaler_x);
    out.scaler_y = Some(scaler_y);
    Ok(out)
}

/// Error target from a classifier probability on the true class: `1 - p`.
pub fn error_target_from_probability(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::contract(format!("probability {p} outside [0, 1]")));
    }
    Ok(1.0 - p)
}
