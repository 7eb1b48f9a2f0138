//! Projected coordinates as CSV, for plotting elsewhere.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use subspace_core::projections::project;
use subspace_core::{LabeledDataset, Matrix, ProjectionMatrix};

use crate::error::{HarnessError, Result};

/// Writes `c0..c{k-1},label` rows for `P x`. Values use the shortest
/// representation that parses back to the same f64.
pub fn export_coords(
    data: &LabeledDataset,
    p: &ProjectionMatrix,
    path: impl AsRef<Path>,
) -> Result<()> {
    let coords = project(p, data.features())?;
    write_coords(&coords, data.labels(), path)
}

/// As [`export_coords`] for coordinates that are already projected.
pub fn write_coords(coords: &Matrix, labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if coords.rows() != labels.len() {
        return Err(HarnessError::Report(format!(
            "{} coordinate rows but {} labels",
            coords.rows(),
            labels.len()
        )));
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| HarnessError::Report(format!("{}: {e}", path.display()));
    let mut header: Vec<String> = (0..coords.cols()).map(|j| format!("c{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for (row, label) in coords.row_iter().zip(labels) {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        record.push(label.to_string());
        w.write_record(&record).map_err(csv_err)?;
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?;
    inner.flush().map_err(|e| HarnessError::io(path, e))
}
