//! Loader for numeric CSV files with a header row.

use std::path::Path;

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Load a comma-separated numeric table. The named column supplies integer
/// class labels; every other column becomes a feature. Parse failures name
/// the offending row and column (1-based, counting the header as row 1).
pub fn load_csv(path: &Path, label_column: &str) -> Result<TabularDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_idx = columns
        .iter()
        .position(|c| *c == label_column)
        .ok_or_else(|| {
            Error::Parse(format!(
                "{}: no column named '{label_column}' in header {columns:?}",
                path.display()
            ))
        })?;
    let feature_count = columns.len() - 1;
    if feature_count == 0 {
        return Err(Error::Parse(format!("{}: no feature columns", path.display())));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(Error::Parse(format!(
                "{}: row {} has {} cells, header has {}",
                path.display(),
                line_no + 1,
                cells.len(),
                columns.len()
            )));
        }
        for (col, cell) in cells.iter().enumerate() {
            if col == label_idx {
                let label: i64 = cell.parse().map_err(|_| {
                    Error::Parse(format!(
                        "{}: row {} column {}: '{}' is not an integer label",
                        path.display(),
                        line_no + 1,
                        col + 1,
                        cell
                    ))
                })?;
                if label < 0 {
                    return Err(Error::Parse(format!(
                        "{}: row {} column {}: negative label {}",
                        path.display(),
                        line_no + 1,
                        col + 1,
                        label
                    )));
                }
                labels.push(label as usize);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Parse(format!(
                        "{}: row {} column {}: '{}' is not numeric",
                        path.display(),
                        line_no + 1,
                        col + 1,
                        cell
                    ))
                })?;
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let features = DenseMatrix::from_vec(labels.len(), feature_count, values)?;
    let class_count = labels.iter().max().map(|&m| m + 1).unwrap_or(0).max(2);
    TabularDataset::new(features, labels, class_count)
}
