//! CSV relation loading: RFC-4180, UTF-8, mandatory header row, '.'
//! decimal separator. Exact duplicate rows collapse into multiplicities.

use std::path::Path;

use relkm_core::{AttributeKind, AttributeSpec, Relation, Value};

use crate::error::CliError;

/// Loads one relation, mapping CSV columns to the declared attributes by
/// header name (column order is free, the attribute set must match the
/// header exactly).
pub fn load_relation(
    path: &Path,
    name: &str,
    specs: Vec<AttributeSpec>,
    round_decimals: Option<u8>,
) -> Result<Relation, CliError> {
    let display = path.display().to_string();
    let load_err = |message: String| CliError::Load {
        path: display.clone(),
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| load_err(e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| load_err(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(load_err("empty file: missing header row".into()));
    }
    let mut columns = Vec::with_capacity(specs.len());
    for spec in &specs {
        let at = headers
            .iter()
            .position(|h| h == spec.name)
            .ok_or_else(|| load_err(format!("missing column `{}`", spec.name)))?;
        columns.push(at);
    }
    for h in headers.iter() {
        if !specs.iter().any(|s| s.name == h) {
            return Err(load_err(format!(
                "unexpected column `{h}` not in the schema"
            )));
        }
    }

    let scale = round_decimals.map(|d| 10f64.powi(d as i32));
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| load_err(format!("row {}: {e}", i + 1)))?;
        let mut row = Vec::with_capacity(specs.len());
        for (spec, &col) in specs.iter().zip(&columns) {
            let cell = record.get(col).ok_or_else(|| {
                load_err(format!("row {}: missing value for `{}`", i + 1, spec.name))
            })?;
            let value = match spec.kind {
                AttributeKind::Continuous => {
                    let parsed: f64 = cell.trim().parse().map_err(|_| {
                        load_err(format!(
                            "row {}: column `{}`: `{cell}` is not a finite real",
                            i + 1,
                            spec.name
                        ))
                    })?;
                    if !parsed.is_finite() {
                        return Err(load_err(format!(
                            "row {}: column `{}`: `{cell}` is not finite",
                            i + 1,
                            spec.name
                        )));
                    }
                    // pre-rounding applies only to feature columns; join
                    // keys must keep their exact values
                    let rounded = match (scale, spec.is_feature()) {
                        (Some(s), true) => (parsed * s).round() / s,
                        _ => parsed,
                    };
                    Value::num(rounded)
                }
                AttributeKind::Categorical => Value::str(cell),
            };
            row.push(value);
        }
        rows.push(row);
    }

    Relation::from_rows(name, specs, rows).map_err(CliError::Schema)
}
