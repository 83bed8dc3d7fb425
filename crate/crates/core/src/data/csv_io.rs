use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

/// Load a header-row CSV of numeric cells.
///
/// Rows are numbered from 1 (the first data row) in errors. When
/// `feature_columns` is `None` every column other than the target is a
/// feature, in file order.
pub fn load_csv(path: &Path, target_column: &str, feature_columns: Option<&[String]>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                row: 0,
                column: String::new(),
                detail: format!("{other:?}"),
            },
        })?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 0,
            column: name.to_string(),
            detail: "column not found in header".into(),
        })
    };
    let target_idx = find(target_column)?;
    let feature_idx: Vec<usize> = match feature_columns {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != target_idx).collect(),
    };

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            detail: e.to_string(),
        })?;
        let cell = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: headers[j].clone(),
                    detail: format!("not a finite number: {raw:?}"),
                })
        };
        for &j in &feature_idx {
            features.push(cell(j)?);
        }
        targets.push(cell(target_idx)?);
    }
    let x = Array2::from_shape_vec((targets.len(), feature_idx.len()), features).unwrap();
    let mut ds = Dataset::new(x, targets)?;
    ds.feature_names = feature_idx.iter().map(|&j| headers[j].clone()).collect();
    ds.target_name = target_column.to_string();
    Ok(ds)
}

/// Write features then target, one row per sample, using the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::contract(format!("{other:?}")),
    })?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(&ds.target_name);
    writer.write_record(&header)?;
    let mut cells = Vec::with_capacity(header.len());
    for (row, y) in ds.features.rows().into_iter().zip(&ds.targets) {
        cells.clear();
        cells.extend(row.iter().map(|v| v.to_string()));
        cells.push(y.to_string());
        writer.write_record(&cells)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
