//! File formats: centroids CSV, marginals CSV, coreset CSV, matrix CSV,
//! and the JSON run report. All writers are deterministic byte-for-byte
//! given identical inputs.

use std::io::Write;
use std::path::Path;

use relkm_core::oracle::DataMatrix;
use relkm_core::{Centroid, CentroidComponent, GridCoreset, MarginalTable, Value};

use crate::error::CliError;

fn file_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(std::io::BufWriter::new(f))
}

fn finish(mut w: impl Write, path: &Path) -> Result<(), CliError> {
    w.flush()
        .map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Centroids CSV: one row per (centroid, feature, category) coordinate.
/// Continuous features use `*` as the category; categorical features get
/// one row per nonzero coordinate.
pub fn write_centroids_csv(
    path: &Path,
    features: &[String],
    centroids: &[Centroid],
) -> Result<(), CliError> {
    let mut w = file_writer(path)?;
    let io_err = |e: std::io::Error| CliError::io(path.display().to_string(), e);
    writeln!(w, "centroid,feature,category,coordinate").map_err(io_err)?;
    for (c, centroid) in centroids.iter().enumerate() {
        for (feature, component) in features.iter().zip(&centroid.components) {
            match component {
                CentroidComponent::Continuous(x) => {
                    writeln!(w, "{c},{feature},*,{x}").map_err(io_err)?;
                }
                CentroidComponent::Categorical { coords, .. } => {
                    for (token, coord) in coords {
                        writeln!(w, "{c},{feature},{token},{coord}").map_err(io_err)?;
                    }
                }
            }
        }
    }
    finish(w, path)
}

/// Marginals CSV: feature,value,weight.
pub fn write_marginals_csv(path: &Path, tables: &[MarginalTable]) -> Result<(), CliError> {
    let mut w = file_writer(path)?;
    let io_err = |e: std::io::Error| CliError::io(path.display().to_string(), e);
    writeln!(w, "feature,value,weight").map_err(io_err)?;
    for table in tables {
        for (value, weight) in &table.entries {
            writeln!(w, "{},{},{}", table.feature, value, weight).map_err(io_err)?;
        }
    }
    finish(w, path)
}

/// Coreset CSV: centroid ids per feature plus the cell weight.
pub fn write_coreset_csv(
    path: &Path,
    features: &[String],
    coreset: &GridCoreset,
) -> Result<(), CliError> {
    let mut w = file_writer(path)?;
    let io_err = |e: std::io::Error| CliError::io(path.display().to_string(), e);
    writeln!(w, "{},weight", features.join(",")).map_err(io_err)?;
    for point in &coreset.points {
        let ids: Vec<String> = point.coords.iter().map(u32::to_string).collect();
        writeln!(w, "{},{}", ids.join(","), point.weight).map_err(io_err)?;
    }
    finish(w, path)
}

/// Data matrix CSV: raw feature values plus the row weight.
pub fn write_matrix_csv(path: &Path, matrix: &DataMatrix) -> Result<(), CliError> {
    let mut w = file_writer(path)?;
    let io_err = |e: std::io::Error| CliError::io(path.display().to_string(), e);
    let names: Vec<&str> = matrix.features.iter().map(|f| f.name.as_str()).collect();
    writeln!(w, "{},weight", names.join(",")).map_err(io_err)?;
    for (row, weight) in matrix.rows.iter().zip(&matrix.weights) {
        let cells: Vec<String> = row.iter().map(Value::to_string).collect();
        writeln!(w, "{},{}", cells.join(","), weight).map_err(io_err)?;
    }
    finish(w, path)
}

/// Reads a matrix CSV back, discarding the content. Used to time the
/// baseline's disk round trip.
pub fn read_matrix_csv_rows(path: &Path) -> Result<usize, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        // touch every field so the read is not optimized away
        rows += usize::from(record.iter().count() > 0);
    }
    Ok(rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialize report: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path.display().to_string(), e))
}
