//! Benchmark harness: the coreset pipeline against the materialize-then-
//! cluster baseline, plus the approximation gap measured on the full
//! materialized matrix.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use relkm_core::oracle::{
    OracleError, dense_weighted_kmeans, evaluate_objective, materialize_join,
};
use relkm_core::query::build_join_tree;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{read_matrix_csv_rows, write_matrix_csv};
use crate::pipeline::{PipelineOutput, RunReport, load_inputs, run_pipeline_on};

#[derive(Clone, Debug, Serialize)]
pub struct BaselineReport {
    pub materialize_ms: f64,
    pub lloyd_ms: f64,
    pub io_write_ms: f64,
    pub io_read_ms: f64,
    /// Materialize + Lloyd, the accounting that favors the baseline.
    pub total_without_io_ms: f64,
    /// Materialize + disk round trip + Lloyd.
    pub total_with_io_ms: f64,
    pub objective: f64,
    pub iterations: usize,
    pub matrix_rows: usize,
    pub one_hot_dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub rkmeans: RunReport,
    pub baseline: Option<BaselineReport>,
    pub baseline_skipped: Option<String>,
    /// Pipeline centroids evaluated on the materialized matrix.
    pub objective_on_matrix: Option<f64>,
    /// (ours - baseline) / baseline on the full-matrix objective.
    pub excess_objective_ratio: Option<f64>,
}

pub struct BenchOutput {
    pub report: BenchReport,
    pub pipeline: PipelineOutput,
}

fn ms(from: Instant) -> f64 {
    from.elapsed().as_secs_f64() * 1e3
}

/// Runs the pipeline, and optionally the materialized baseline with the
/// same k, seed, and stopping rule. A cap refusal skips the baseline with
/// a notice instead of failing the run.
pub fn run_bench(
    config: &RunConfig,
    baseline: bool,
    scratch: &Path,
) -> Result<BenchOutput, CliError> {
    let inputs = load_inputs(config)?;
    let relations = inputs.relations.clone();
    let query = inputs.query.clone();
    let pipeline = run_pipeline_on(inputs, config)?;

    let mut report = BenchReport {
        rkmeans: pipeline.report.clone(),
        baseline: None,
        baseline_skipped: None,
        objective_on_matrix: None,
        excess_objective_ratio: None,
    };

    if baseline {
        let (k, _) = config.clustering_params()?;
        let lambda = config.feature_weight_vec();
        let tree = build_join_tree(&query, relations)?;

        let materialize_start = Instant::now();
        match materialize_join(&tree, &query.features, config.materialize_cap) {
            Err(OracleError::CapExceeded { estimate, cap }) => {
                report.baseline_skipped = Some(format!(
                    "baseline skipped: estimated join cardinality {estimate} exceeds the \
                     materialization cap {cap}"
                ));
            }
            Err(other) => return Err(other.into()),
            Ok(matrix) => {
                let materialize_ms = ms(materialize_start);

                let io_write_start = Instant::now();
                let matrix_path = scratch.join("baseline_matrix.csv");
                write_matrix_csv(&matrix_path, &matrix)?;
                let io_write_ms = ms(io_write_start);
                let io_read_start = Instant::now();
                read_matrix_csv_rows(&matrix_path)?;
                let io_read_ms = ms(io_read_start);

                let lloyd_start = Instant::now();
                let dense = dense_weighted_kmeans(
                    &matrix,
                    k,
                    config.seed,
                    config.max_iter,
                    config.tol,
                    lambda.as_deref(),
                )?;
                let lloyd_ms = ms(lloyd_start);

                let ours =
                    evaluate_objective(&matrix, &pipeline.clustering.centroids, lambda.as_deref())?;
                report.objective_on_matrix = Some(ours);
                report.excess_objective_ratio =
                    (dense.objective > 0.0).then(|| (ours - dense.objective) / dense.objective);
                report.baseline = Some(BaselineReport {
                    materialize_ms,
                    lloyd_ms,
                    io_write_ms,
                    io_read_ms,
                    total_without_io_ms: materialize_ms + lloyd_ms,
                    total_with_io_ms: materialize_ms + io_write_ms + io_read_ms + lloyd_ms,
                    objective: dense.objective,
                    iterations: dense.iterations,
                    matrix_rows: matrix.rows.len(),
                    one_hot_dim: matrix.one_hot_dim(),
                });
            }
        }
    }

    Ok(BenchOutput { report, pipeline })
}

pub fn render_bench(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str("=== coreset pipeline ===\n");
    out.push_str(&crate::pipeline::render_report(&report.rkmeans));
    if let Some(skip) = &report.baseline_skipped {
        out.push_str(&format!("\n{skip}\n"));
    }
    if let Some(baseline) = &report.baseline {
        out.push_str(&format!(
            "\n=== materialized baseline (k-means++ + Lloyd on the full matrix) ===\n\
             materialize             {:>11.2} ms\n\
             disk write / read       {:>5.2} / {:.2} ms\n\
             dense k-means           {:>11.2} ms\n\
             total without io        {:>11.2} ms\n\
             total with io           {:>11.2} ms\n\
             baseline objective      {:>14.6}\n",
            baseline.materialize_ms,
            baseline.io_write_ms,
            baseline.io_read_ms,
            baseline.lloyd_ms,
            baseline.total_without_io_ms,
            baseline.total_with_io_ms,
            baseline.objective,
        ));
        if let (Some(ours), Some(ratio)) =
            (report.objective_on_matrix, report.excess_objective_ratio)
        {
            out.push_str(&format!(
                "pipeline objective on the matrix {:>14.6} (excess ratio {:+.4})\n",
                ours, ratio
            ));
        }
    }
    out
}
