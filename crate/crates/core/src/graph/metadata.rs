use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Dense node-attribute matrix, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataMatrix {
    values: Array2<f64>,
}

impl MetadataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "metadata contains non-finite values".into(),
            ));
        }
        Ok(MetadataMatrix { values })
    }

    /// One-hot encodes class labels into `classes` columns.
    pub fn one_hot(labels: &[usize], classes: usize) -> Result<Self> {
        let mut values = Array2::zeros((labels.len(), classes));
        for (row, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::Dimension(format!(
                    "label {label} at row {row} exceeds {classes} classes"
                )));
            }
            values[[row, label]] = 1.0;
        }
        Ok(MetadataMatrix { values })
    }

    pub fn node_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Copy with every column shifted to mean zero.
    pub fn centered(&self) -> MetadataMatrix {
        let mut values = self.values.clone();
        if values.nrows() > 0 {
            for mut col in values.columns_mut() {
                let mean = col.sum() / col.len() as f64;
                col -= mean;
            }
        }
        MetadataMatrix { values }
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Index of the largest entry in each row; the class label for one-hot
    /// metadata.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Reads `n` rows of whitespace-separated reals.
pub fn load_metadata(path: &Path, n: usize) -> Result<MetadataMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split_whitespace() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(path, lineno + 1, format!("non-numeric field {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno + 1, "non-finite value"));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected {c} columns, found {width}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Dimension(format!(
            "{} has {rows} metadata rows, graph has {n} nodes",
            path.display()
        )));
    }
    let values = Array2::from_shape_vec((rows, cols.unwrap_or(0)), data)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let meta = MetadataMatrix { values };
    if meta.is_all_zero() {
        log::warn!("{}: metadata is all zero", path.display());
    }
    Ok(meta)
}
