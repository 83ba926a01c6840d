//! End-to-end orchestration: load relations, build the join tree, then
//! run the four pipeline steps with per-step wall times.

use std::time::Instant;

use serde::Serialize;

use relkm_core::coreset::{build_coreset, check_fd_bound, quantize_relations};
use relkm_core::lloyd::run_weighted_kmeans;
use relkm_core::marginal::{compute_marginals, semijoin_reduce};
use relkm_core::query::build_join_tree;
use relkm_core::schema::{validate_fd_decls, validate_fds};
use relkm_core::solvers::solve_subspace;
use relkm_core::{
    AttributeKind, ClusteringResult, FdBoundReport, FdChain, FdReport, GridCoreset, JoinQuery,
    JoinTree, LloydConfig, MarginalTable, Relation, SubspaceCentroids,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::loader::load_relation;

/// Everything parsed and loaded from disk, before any aggregation.
pub struct LoadedInputs {
    pub relations: Vec<Relation>,
    pub query: JoinQuery,
    pub fd_chains: Vec<FdChain>,
    /// Feature kinds in feature order.
    pub feature_kinds: Vec<AttributeKind>,
}

pub fn load_inputs(config: &RunConfig) -> Result<LoadedInputs, CliError> {
    let mut relations = Vec::with_capacity(config.file.relations.len());
    for rel_cfg in &config.file.relations {
        let path = config.base_dir.join(&rel_cfg.file);
        let specs = config.attribute_specs(rel_cfg);
        relations.push(load_relation(
            &path,
            &rel_cfg.name,
            specs,
            config.file.continuous_round_decimals,
        )?);
    }
    let query = config.join_query();
    let fd_chains = config.fd_chains();
    validate_fd_decls(&fd_chains, &relations)?;

    let mut feature_kinds = Vec::with_capacity(query.features.len());
    for f in &query.features {
        let rel = relations
            .iter()
            .find(|r| r.name() == f.relation)
            .ok_or_else(|| {
                CliError::Config(format!("feature names unknown relation `{}`", f.relation))
            })?;
        let idx = rel.attribute_index(&f.attribute).ok_or_else(|| {
            CliError::Config(format!(
                "feature `{}.{}` not found",
                f.relation, f.attribute
            ))
        })?;
        feature_kinds.push(rel.attributes()[idx].kind);
    }
    Ok(LoadedInputs {
        relations,
        query,
        fd_chains,
        feature_kinds,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepTimes {
    pub step1_marginals_ms: f64,
    pub step2_subspace_ms: f64,
    pub step3_coreset_ms: f64,
    pub step4_lloyd_ms: f64,
}

/// The structured run report written next to the centroids file.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub join_cardinality: u64,
    pub coreset_size: usize,
    pub step_times_ms: StepTimes,
    pub total_ms: f64,
    /// Weighted SSE of the coreset against the final centroids, on raw
    /// integer weights.
    pub objective: f64,
    /// The same objective with weights normalized to sum to one.
    pub objective_normalized: f64,
    pub iterations: usize,
    pub seed: u64,
    pub threads: usize,
    pub k: usize,
    pub kappa: usize,
    pub config: serde_json::Value,
}

pub struct PipelineOutput {
    pub report: RunReport,
    pub clustering: ClusteringResult,
    pub coreset: GridCoreset,
    pub marginals: Vec<MarginalTable>,
    pub fd_report: FdReport,
    pub fd_bound: Option<FdBoundReport>,
    /// Feature attribute names in feature order.
    pub feature_names: Vec<String>,
}

fn ms(from: Instant) -> f64 {
    from.elapsed().as_secs_f64() * 1e3
}

/// Solves every feature's subproblem, optionally across a thread pool.
/// Results are collected in feature order, so the outcome is identical
/// for any worker count.
pub fn solve_subspaces(
    marginals: &[MarginalTable],
    kinds: &[AttributeKind],
    kappa: usize,
    threads: usize,
) -> Result<Vec<SubspaceCentroids>, CliError> {
    if threads <= 1 || marginals.len() <= 1 {
        return marginals
            .iter()
            .zip(kinds)
            .map(|(m, &kind)| solve_subspace(m, kind, kappa).map_err(CliError::Solver))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        marginals
            .par_iter()
            .zip(kinds.par_iter())
            .map(|(m, &kind)| solve_subspace(m, kind, kappa).map_err(CliError::Solver))
            .collect()
    })
}

pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput, CliError> {
    let inputs = load_inputs(config)?;
    run_pipeline_on(inputs, config)
}

pub fn run_pipeline_on(
    inputs: LoadedInputs,
    config: &RunConfig,
) -> Result<PipelineOutput, CliError> {
    let (k, kappa) = config.clustering_params()?;
    let fd_report = validate_fds(&inputs.fd_chains, &inputs.relations);
    let feature_names: Vec<String> = inputs
        .query
        .features
        .iter()
        .map(|f| f.attribute.clone())
        .collect();

    let total_start = Instant::now();

    // Step 1: semijoin reduction and per-feature marginals. Every
    // marginal's total is the join cardinality, so no separate count pass
    // is needed.
    let step1_start = Instant::now();
    let tree: JoinTree = build_join_tree(&inputs.query, inputs.relations)?;
    let tree = semijoin_reduce(&tree).map_err(CliError::at_step("step1-marginals"))?;
    let marginals = compute_marginals(&tree, &inputs.query.features)
        .map_err(CliError::at_step("step1-marginals"))?;
    let join_cardinality = marginals[0].total;
    if join_cardinality == 0 {
        return Err(CliError::Config(
            "the join result is empty; nothing to cluster".into(),
        ));
    }
    let step1_ms = ms(step1_start);

    // Step 2: per-feature optimal clustering with kappa centroids.
    let step2_start = Instant::now();
    let dims =
        solve_subspaces(&marginals, &inputs.feature_kinds, kappa, config.threads).map_err(|e| {
            CliError::Step {
                step: "step2-subspace",
                source: Box::new(e),
            }
        })?;
    let step2_ms = ms(step2_start);

    // Step 3: quantize relations and aggregate the grid coreset.
    let step3_start = Instant::now();
    let quantized = quantize_relations(&tree, &dims, &inputs.query.features)
        .map_err(CliError::at_step("step3-coreset"))?;
    let coreset = build_coreset(&quantized, dims).map_err(CliError::at_step("step3-coreset"))?;
    let step3_ms = ms(step3_start);
    debug_assert_eq!(coreset.total_weight, join_cardinality);

    let fd_bound = (!inputs.fd_chains.is_empty())
        .then(|| check_fd_bound(&coreset, &inputs.fd_chains, &inputs.query.features, kappa));

    // Step 4: weighted k-means on the coreset.
    let step4_start = Instant::now();
    let lloyd_config = LloydConfig {
        max_iter: config.max_iter,
        tol: config.tol,
        feature_weights: config.feature_weight_vec(),
    };
    let clustering = run_weighted_kmeans(&coreset, k, config.seed, &lloyd_config).map_err(|e| {
        CliError::Step {
            step: "step4-lloyd",
            source: Box::new(CliError::Lloyd(e)),
        }
    })?;
    let step4_ms = ms(step4_start);
    let total_ms = ms(total_start);

    let report = RunReport {
        join_cardinality,
        coreset_size: coreset.len(),
        step_times_ms: StepTimes {
            step1_marginals_ms: step1_ms,
            step2_subspace_ms: step2_ms,
            step3_coreset_ms: step3_ms,
            step4_lloyd_ms: step4_ms,
        },
        total_ms,
        objective: clustering.objective,
        objective_normalized: clustering.objective / join_cardinality as f64,
        iterations: clustering.iterations,
        seed: config.seed,
        threads: config.threads,
        k,
        kappa,
        config: config.echo(),
    };

    Ok(PipelineOutput {
        report,
        clustering,
        coreset,
        marginals,
        fd_report,
        fd_bound,
        feature_names,
    })
}

/// Human-readable summary table for stdout.
pub fn render_report(report: &RunReport) -> String {
    let times = &report.step_times_ms;
    let mut out = String::new();
    out.push_str(&format!(
        "join cardinality |X|    {:>14}\ncoreset size |G|        {:>14}\n",
        report.join_cardinality, report.coreset_size
    ));
    out.push_str(&format!(
        "objective (raw)         {:>14.6}\nobjective (normalized)  {:>14.6}\niterations              {:>14}\n",
        report.objective, report.objective_normalized, report.iterations
    ));
    out.push_str(&format!(
        "step 1 marginals        {:>11.2} ms\nstep 2 subspace solves  {:>11.2} ms\nstep 3 coreset          {:>11.2} ms\nstep 4 weighted k-means {:>11.2} ms\ntotal                   {:>11.2} ms\n",
        times.step1_marginals_ms,
        times.step2_subspace_ms,
        times.step3_coreset_ms,
        times.step4_lloyd_ms,
        report.total_ms
    ));
    out
}
