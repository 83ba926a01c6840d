//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N PASS` line with the measured numbers (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{LazyLock, Mutex};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relkm_core::coreset::{build_coreset, check_fd_bound, quantize_relations};
use relkm_core::lloyd::{CentroidComponent, LloydConfig, run_weighted_kmeans, sparse_distance};
use relkm_core::marginal::{compute_join_count, compute_marginals, semijoin_reduce};
use relkm_core::oracle::{
    brute_force_kmeans, brute_force_kmeans_points, densify_grid_cell, evaluate_objective,
    evaluate_objective_dense, grid_audit, materialize_join, quantize_group_by,
};
use relkm_core::query::build_join_tree;
use relkm_core::schema::validate_fds;
use relkm_core::solvers::{
    GridComponent, categorical_objective, solve_categorical, solve_continuous_1d, solve_subspace,
};
use relkm_core::{
    AttributeKind, AttributeRole, AttributeSpec, FeatureRef, GridCoreset, JoinQuery, JoinTree,
    MarginalTable, Relation, SubspaceCentroids, Value,
};

use relkm_cli::config::{Overrides, RunConfig};
use relkm_cli::pipeline::{load_inputs, run_pipeline_on};
use relkm_cli::synth::{SynthSpec, generate};

// ---------------------------------------------------------------------
// random acyclic instances
// ---------------------------------------------------------------------

struct Instance {
    relations: Vec<Relation>,
    query: JoinQuery,
    kinds: Vec<AttributeKind>,
}

/// Random acyclic natural-join instance: 2-4 relations in a chain or star,
/// small key domains so joins are plentiful, and mixed-kind features.
/// `tiny` keeps the join result at a handful of distinct tuples.
fn random_instance(rng: &mut ChaCha8Rng, tiny: bool) -> Instance {
    let n_rel = if tiny { 2 } else { rng.random_range(2..=4) };
    let star = rng.random_bool(0.5);
    let key_domain = if tiny {
        rng.random_range(2..=3)
    } else {
        rng.random_range(2..=4)
    };

    let mut relations = Vec::new();
    let mut features = Vec::new();
    let mut kinds = Vec::new();
    let mut feature_counter = 0usize;

    for i in 0..n_rel {
        let keys: Vec<String> = if star {
            if i == 0 {
                (1..n_rel).map(|j| format!("k{j}")).collect()
            } else {
                vec![format!("k{i}")]
            }
        } else {
            let mut v = Vec::new();
            if i > 0 {
                v.push(format!("k{}", i - 1));
            }
            if i + 1 < n_rel {
                v.push(format!("k{i}"));
            }
            v
        };

        let mut attrs: Vec<AttributeSpec> = keys
            .iter()
            .map(|k| AttributeSpec::new(k, AttributeKind::Categorical, AttributeRole::JoinKey))
            .collect();

        let n_features = if tiny || i == 0 {
            1
        } else {
            rng.random_range(0..=1)
        };
        let mut local = Vec::new();
        for _ in 0..n_features {
            let name = format!("f{feature_counter}");
            feature_counter += 1;
            let kind = if rng.random_bool(0.5) {
                AttributeKind::Continuous
            } else {
                AttributeKind::Categorical
            };
            attrs.push(AttributeSpec::new(&name, kind, AttributeRole::Feature));
            local.push((name, kind));
        }

        let row_count = if tiny {
            rng.random_range(1..=4)
        } else {
            rng.random_range(2..=10)
        };
        let mut rows = Vec::new();
        for _ in 0..row_count {
            let mut row = Vec::new();
            for _ in &keys {
                row.push(Value::str(format!("j{}", rng.random_range(0..key_domain))));
            }
            for (_, kind) in &local {
                row.push(match kind {
                    AttributeKind::Continuous => {
                        let steps = if tiny { 4 } else { 6 };
                        Value::num(rng.random_range(0..steps) as f64 * 1.5)
                    }
                    AttributeKind::Categorical => {
                        let pool = if tiny { 3 } else { 5 };
                        Value::str(format!("t{}", rng.random_range(0..pool)))
                    }
                });
            }
            rows.push(row);
        }

        let name = format!("r{i}");
        relations.push(Relation::from_rows(&name, attrs, rows).unwrap());
        for (fname, kind) in local {
            features.push(FeatureRef::new(&name, fname));
            kinds.push(kind);
        }
    }

    let query = JoinQuery {
        relations: (0..n_rel).map(|i| format!("r{i}")).collect(),
        features,
    };
    Instance {
        relations,
        query,
        kinds,
    }
}

fn solve_dims(
    tree: &JoinTree,
    query: &JoinQuery,
    kinds: &[AttributeKind],
    kappa: usize,
) -> Vec<SubspaceCentroids> {
    let marginals = compute_marginals(tree, &query.features).unwrap();
    marginals
        .iter()
        .zip(kinds)
        .map(|(m, &kind)| solve_subspace(m, kind, kappa).unwrap())
        .collect()
}

fn coreset_points_map(coreset: &GridCoreset) -> BTreeMap<Vec<u32>, u64> {
    coreset
        .points
        .iter()
        .map(|p| (p.coords.clone(), p.weight))
        .collect()
}

fn one_hot_dim(dims: &[SubspaceCentroids]) -> usize {
    dims.iter()
        .map(|d| match d {
            SubspaceCentroids::Continuous(_) => 1,
            SubspaceCentroids::Categorical(c) => c.domain_size(),
        })
        .sum()
}

// ---------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------

/// Marginals and the join count match materialized group-by counting
/// exactly on random acyclic instances.
#[test]
fn criterion_01_marginal_oracle_equivalence() {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut seed = 0u64;
    while checked < 60 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instance = random_instance(&mut rng, false);
        let tree = build_join_tree(&instance.query, instance.relations).unwrap();
        let count = compute_join_count(&tree).unwrap();
        if count > 10_000 {
            continue;
        }
        let matrix = materialize_join(&tree, &instance.query.features, 10_000).unwrap();
        assert_eq!(matrix.total_weight(), count, "seed {seed}: |X| mismatch");

        let marginals = compute_marginals(&tree, &instance.query.features).unwrap();
        for (j, table) in marginals.iter().enumerate() {
            let mut oracle: BTreeMap<Value, u64> = BTreeMap::new();
            for (row, w) in matrix.rows.iter().zip(&matrix.weights) {
                *oracle.entry(row[j].clone()).or_insert(0) += w;
            }
            assert_eq!(table.entries, oracle, "seed {seed}, feature {j}");
            assert_eq!(table.total, count, "seed {seed}, feature {j}: mass");
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "took {elapsed:?}, budget 10 s"
    );
    println!(
        "criterion 1 PASS: marginals and join counts match the materialized oracle exactly on \
         {checked} random instances in {:.2} s",
        elapsed.as_secs_f64()
    );
}

/// Coreset weights match quantize-then-group-by over the materialized
/// join exactly, and their total equals the join cardinality.
#[test]
fn criterion_02_coreset_oracle_equivalence() {
    let mut checked = 0usize;
    let mut seed = 1000u64;
    while checked < 60 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instance = random_instance(&mut rng, false);
        let kappa = rng.random_range(2..=4);
        let tree = build_join_tree(&instance.query, instance.relations).unwrap();
        let count = compute_join_count(&tree).unwrap();
        if count == 0 || count > 10_000 {
            continue;
        }
        let matrix = materialize_join(&tree, &instance.query.features, 10_000).unwrap();

        let reduced = semijoin_reduce(&tree).unwrap();
        let dims = solve_dims(&reduced, &instance.query, &instance.kinds, kappa);
        let oracle = quantize_group_by(&matrix, &dims);
        let quantized = quantize_relations(&reduced, &dims, &instance.query.features).unwrap();
        let coreset = build_coreset(&quantized, dims).unwrap();

        assert_eq!(coreset.total_weight, count, "seed {seed}: total weight");
        assert_eq!(
            coreset_points_map(&coreset),
            oracle,
            "seed {seed}: cell weights"
        );
        checked += 1;
    }
    println!(
        "criterion 2 PASS: coreset weights equal the quantize-then-group-by oracle exactly on \
         {checked} random instances"
    );
}

/// The 1-D DP matches brute force over contiguous partitions, and the
/// categorical closed form matches the Bell-enumeration minimum of the
/// partition objective.
#[test]
fn criterion_03_subsolver_optimality() {
    // continuous
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..220 {
        let n = rng.random_range(2..=12);
        let kappa = rng.random_range(1..=4);
        let mut entries = BTreeMap::new();
        while entries.len() < n {
            let x = rng.random_range(-400..400) as f64 / 4.0;
            entries.insert(Value::num(x), rng.random_range(1..=9));
        }
        let total = entries.values().sum();
        let table = MarginalTable {
            feature: "x".into(),
            entries,
            total,
        };
        let solved = solve_continuous_1d(&table, kappa).unwrap();
        let values: Vec<f64> = table.entries.keys().map(|v| v.as_num().unwrap()).collect();
        let weights: Vec<f64> = table.entries.values().map(|&w| w as f64).collect();
        let oracle = brute_force_contiguous(&values, &weights, kappa);
        let denom = oracle.abs().max(1.0);
        assert!(
            (solved.cost() - oracle).abs() / denom < 1e-9,
            "trial {trial}: dp {} vs oracle {oracle}",
            solved.cost()
        );
    }

    // categorical
    for trial in 0..220 {
        let n = rng.random_range(1..=8);
        let kappa = rng.random_range(1..=4);
        let mut entries = BTreeMap::new();
        for c in 0..n {
            entries.insert(Value::str(format!("c{c}")), rng.random_range(1..=50));
        }
        let total = entries.values().sum();
        let table = MarginalTable {
            feature: "k".into(),
            entries,
            total,
        };
        let solved = solve_categorical(&table, kappa).unwrap();

        let tokens: Vec<String> = table
            .entries
            .keys()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        let weights: BTreeMap<String, f64> = table
            .entries
            .iter()
            .map(|(v, &w)| (v.as_str().unwrap().to_string(), w as f64))
            .collect();
        let mut best = f64::INFINITY;
        enumerate_set_partitions(tokens.len(), kappa, &mut |assign| {
            let parts = assign.iter().copied().max().unwrap_or(0) + 1;
            let mut partition: Vec<Vec<String>> = vec![Vec::new(); parts];
            for (i, &p) in assign.iter().enumerate() {
                partition[p].push(tokens[i].clone());
            }
            let objective = categorical_objective(&weights, &partition).unwrap();
            if objective < best {
                best = objective;
            }
        });
        let denom = best.abs().max(1.0);
        assert!(
            (solved.cost() - best).abs() / denom < 1e-12,
            "trial {trial}: closed form {} vs enumeration {best}",
            solved.cost()
        );
    }
    println!(
        "criterion 3 PASS: DP matches contiguous brute force and the categorical closed form \
         matches Bell enumeration on 220 instances each"
    );
}

/// With exact sub-solvers at both levels and kappa = k, the final
/// objective is at most 9x the brute-force optimum. Zero violations.
#[test]
fn criterion_04_nine_approximation_bound() {
    let mut checked = 0usize;
    let mut seed = 5000u64;
    let mut worst_ratio: f64 = 0.0;
    while checked < 110 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instance = random_instance(&mut rng, true);
        let tree = build_join_tree(&instance.query, instance.relations).unwrap();
        let count = compute_join_count(&tree).unwrap();
        if count == 0 {
            continue;
        }
        let matrix = materialize_join(&tree, &instance.query.features, 10_000).unwrap();
        if matrix.rows.len() < 2 || matrix.rows.len() > 10 {
            continue;
        }
        let reduced = semijoin_reduce(&tree).unwrap();

        for k in [2usize, 3] {
            // level 1 exact: DP + categorical closed form with kappa = k
            let dims = solve_dims(&reduced, &instance.query, &instance.kinds, k);
            let quantized = quantize_relations(&reduced, &dims, &instance.query.features).unwrap();
            let coreset = build_coreset(&quantized, dims).unwrap();

            // level 2 exact: brute-force weighted k-means on the coreset
            let cells: Vec<Vec<f64>> = coreset
                .points
                .iter()
                .map(|p| densify_grid_cell(&matrix, &coreset.dims, &p.coords).unwrap())
                .collect();
            let cell_weights: Vec<u64> = coreset.points.iter().map(|p| p.weight).collect();
            let gamma = brute_force_kmeans_points(&cells, &cell_weights, k).unwrap();

            let ours = evaluate_objective_dense(&matrix, &gamma.centroids, None).unwrap();
            let opt = brute_force_kmeans(&matrix, k, None).unwrap().objective;
            assert!(
                ours <= 9.0 * opt * (1.0 + 1e-9) + 1e-9,
                "seed {seed}, k {k}: ours {ours} vs 9 x OPT {}",
                9.0 * opt
            );
            if opt > 1e-12 {
                worst_ratio = worst_ratio.max(ours / opt);
            }
        }
        checked += 1;
    }
    println!(
        "criterion 4 PASS: objective <= 9 x OPT on {checked} tiny instances x k in {{2,3}} \
         (worst observed ratio {worst_ratio:.3})"
    );
}

/// Planted FD chains bound the nonzero grid-cell count by
/// prod(1 + d_i (kappa - 1)) x kappa^(non-chain features). Zero violations.
#[test]
fn criterion_05_fd_chain_bound() {
    let mut cases = 0usize;
    for chain_len in 2..=5usize {
        for kappa in [2usize, 5] {
            let dir = tempfile::tempdir().unwrap();
            let spec = SynthSpec {
                keys_p: 60,
                keys_s: 8,
                sparsity: 0.3,
                reps_p: 2,
                reps_s: 1,
                clusters: 4,
                fd_chain_lengths: vec![chain_len],
                fd_base_cardinality: 48,
                seed: (chain_len * 10 + kappa) as u64,
                ..SynthSpec::default()
            };
            let summary = generate(&spec, dir.path()).unwrap();
            let overrides = Overrides {
                k: Some(kappa.max(2)),
                kappa: Some(kappa),
                ..Overrides::default()
            };
            let config = RunConfig::load(&summary.config_path, &overrides).unwrap();
            let inputs = load_inputs(&config).unwrap();

            let fd_report = validate_fds(&inputs.fd_chains, &inputs.relations);
            assert!(fd_report.all_hold(), "planted chain must validate");

            let chains = inputs.fd_chains.clone();
            let features = inputs.query.features.clone();
            let tree = build_join_tree(&inputs.query, inputs.relations).unwrap();
            let reduced = semijoin_reduce(&tree).unwrap();
            let marginals = compute_marginals(&reduced, &features).unwrap();
            let dims: Vec<SubspaceCentroids> = marginals
                .iter()
                .zip(&inputs.feature_kinds)
                .map(|(m, &kind)| solve_subspace(m, kind, kappa).unwrap())
                .collect();
            let quantized = quantize_relations(&reduced, &dims, &features).unwrap();
            let coreset = build_coreset(&quantized, dims).unwrap();

            let report = check_fd_bound(&coreset, &chains, &features, kappa);
            assert!(
                report.holds,
                "chain_len {chain_len}, kappa {kappa}: {} cells > bound {}",
                report.points, report.chain_bound
            );
            cases += 1;
        }
    }
    println!(
        "criterion 5 PASS: grid-cell counts stayed within the FD-chain bound on {cases} \
         chain-length x kappa configurations"
    );
}

/// The quantization cost measured densely on the materialized matrix
/// equals the sum of per-feature subspace costs, and the full-grid
/// nearest-cell assignment matches per-dimension quantization.
#[test]
fn criterion_06_decomposition_identity() {
    let mut checked = 0usize;
    let mut seed = 9000u64;
    while checked < 50 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instance = random_instance(&mut rng, false);
        let kappa = rng.random_range(2..=4);
        let tree = build_join_tree(&instance.query, instance.relations).unwrap();
        let count = compute_join_count(&tree).unwrap();
        if count == 0 || count > 10_000 {
            continue;
        }
        let matrix = materialize_join(&tree, &instance.query.features, 10_000).unwrap();
        let reduced = semijoin_reduce(&tree).unwrap();
        let dims = solve_dims(&reduced, &instance.query, &instance.kinds, kappa);

        let audit = grid_audit(&matrix, &dims).unwrap();
        assert_eq!(audit.rule_mismatches, 0, "seed {seed}: decomposability");

        let subspace_total: f64 = dims.iter().map(SubspaceCentroids::cost).sum();
        let denom = subspace_total.abs().max(1e-12);
        assert!(
            (audit.cost - subspace_total).abs() / denom < 1e-6
                || (audit.cost.abs() < 1e-9 && subspace_total.abs() < 1e-9),
            "seed {seed}: dense quantization cost {} vs subspace sum {subspace_total}",
            audit.cost
        );
        checked += 1;
    }
    println!(
        "criterion 6 PASS: dense quantization cost equals the subspace-cost sum (1e-6 relative) \
         and per-dimension assignment matches the full-grid argmin on {checked} instances"
    );
}

/// Sparse distances equal dense one-hot distances, and the instrumented
/// per-iteration distance-term count stays within 4 (|G| + D) k m.
#[test]
fn criterion_07_sparse_distance_and_cost_model() {
    // (a) sparse = dense on >= 10^3 random component pairs
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pairs = 0usize;
    while pairs < 1200 {
        let domain = rng.random_range(3..=8);
        let kappa = rng.random_range(2..=4.min(domain));
        let mut entries = BTreeMap::new();
        for c in 0..domain {
            entries.insert(Value::str(format!("c{c}")), rng.random_range(1..=20));
        }
        let total = entries.values().sum();
        let table = MarginalTable {
            feature: "k".into(),
            entries,
            total,
        };
        let solved = solve_categorical(&table, kappa).unwrap();
        let dim = SubspaceCentroids::Categorical(solved);

        // random centroid: positive coordinates over a random token subset
        let mut coords = BTreeMap::new();
        let mut mass = 0.0;
        for c in 0..domain {
            if rng.random_bool(0.6) {
                let w = rng.random_range(1..=100) as f64;
                coords.insert(format!("c{c}"), w);
                mass += w;
            }
        }
        if coords.is_empty() {
            coords.insert("c0".to_string(), 1.0);
            mass = 1.0;
        }
        for v in coords.values_mut() {
            *v /= mass;
        }
        let norm_sq = coords.values().map(|x| x * x).sum();
        let centroid = CentroidComponent::Categorical {
            coords: coords.clone(),
            norm_sq,
        };

        for id in 0..dim.count() as u32 {
            let component = dim.component(id);
            let sparse = sparse_distance(&component, &centroid);
            // dense expansion over the full domain
            let mut dense = 0.0;
            for c in 0..domain {
                let token = format!("c{c}");
                let grid_coord = match &component {
                    GridComponent::Heavy(t) => f64::from(*t == token),
                    GridComponent::Light { coords, .. } => {
                        coords.get(&token).copied().unwrap_or(0.0)
                    }
                    GridComponent::Continuous(_) => unreachable!(),
                };
                let c_coord = coords.get(&token).copied().unwrap_or(0.0);
                dense += (grid_coord - c_coord) * (grid_coord - c_coord);
            }
            assert!(
                (sparse - dense).abs() < 1e-9,
                "sparse {sparse} vs dense {dense} (id {id})"
            );
            pairs += 1;
        }
    }

    // (b) instrumented distance-term budget on a categorical-heavy coreset
    let rows: Vec<Vec<Value>> = (0..400)
        .map(|i| {
            vec![
                Value::num((i % 17) as f64 * 0.75),
                Value::str(format!("a{}", (i * 13) % 30)),
                Value::str(format!("b{}", (i * 7) % 25)),
            ]
        })
        .collect();
    let relation = Relation::from_rows(
        "r",
        vec![
            AttributeSpec::new("x", AttributeKind::Continuous, AttributeRole::Feature),
            AttributeSpec::new("a", AttributeKind::Categorical, AttributeRole::Feature),
            AttributeSpec::new("b", AttributeKind::Categorical, AttributeRole::Feature),
        ],
        rows,
    )
    .unwrap();
    let query = JoinQuery {
        relations: vec!["r".into()],
        features: vec![
            FeatureRef::new("r", "x"),
            FeatureRef::new("r", "a"),
            FeatureRef::new("r", "b"),
        ],
    };
    let kinds = [
        AttributeKind::Continuous,
        AttributeKind::Categorical,
        AttributeKind::Categorical,
    ];
    let tree = build_join_tree(&query, vec![relation]).unwrap();
    let (k, kappa, m) = (6usize, 5usize, 3usize);
    let dims = solve_dims(&tree, &query, &kinds, kappa);
    let quantized = quantize_relations(&tree, &dims, &query.features).unwrap();
    let coreset = build_coreset(&quantized, dims).unwrap();
    let d_total = one_hot_dim(&coreset.dims);
    assert_eq!(d_total, 1 + 30 + 25);

    let result = run_weighted_kmeans(&coreset, k, 3, &LloydConfig::default()).unwrap();
    let budget = 4 * (coreset.len() + d_total) * k * m;
    let worst = result
        .distance_terms_per_iter
        .iter()
        .copied()
        .max()
        .unwrap();
    for (iter, &terms) in result.distance_terms_per_iter.iter().enumerate() {
        assert!(
            terms <= budget as u64,
            "iteration {iter}: {terms} distance terms exceed 4(|G|+D)km = {budget}"
        );
    }
    println!(
        "criterion 7 PASS: sparse distances equal dense on {pairs} component pairs; worst \
         iteration used {worst} of {budget} budgeted distance terms (|G|={}, D={d_total})",
        coreset.len()
    );
}

/// Lloyd objectives never increase, and a fixed seed in single-thread mode
/// reproduces byte-identical centroid files.
#[test]
fn criterion_08_monotonicity_and_determinism() {
    let mut checked = 0usize;
    let mut seed = 12_000u64;
    while checked < 40 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instance = random_instance(&mut rng, false);
        let kappa = rng.random_range(2..=4);
        let tree = build_join_tree(&instance.query, instance.relations).unwrap();
        let count = compute_join_count(&tree).unwrap();
        if count == 0 || count > 10_000 {
            continue;
        }
        let reduced = semijoin_reduce(&tree).unwrap();
        let dims = solve_dims(&reduced, &instance.query, &instance.kinds, kappa);
        let quantized = quantize_relations(&reduced, &dims, &instance.query.features).unwrap();
        let coreset = build_coreset(&quantized, dims).unwrap();
        let k = rng.random_range(1..=coreset.len().min(4));

        let config = LloydConfig {
            tol: 0.0,
            ..LloydConfig::default()
        };
        let result = run_weighted_kmeans(&coreset, k, seed, &config).unwrap();
        for (i, pair) in result.objective_trace.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "seed {seed}: objective rose from {} to {} at iteration {i}",
                pair[0],
                pair[1]
            );
        }

        // determinism across two identical runs, down to output bytes
        let again = run_weighted_kmeans(&coreset, k, seed, &config).unwrap();
        assert_eq!(result.assignment, again.assignment);
        assert_eq!(result.objective.to_bits(), again.objective.to_bits());
        let feature_names: Vec<String> = instance
            .query
            .features
            .iter()
            .map(|f| f.attribute.clone())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("c1.csv"), dir.path().join("c2.csv"));
        relkm_cli::output::write_centroids_csv(&p1, &feature_names, &result.centroids).unwrap();
        relkm_cli::output::write_centroids_csv(&p2, &feature_names, &again.centroids).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        checked += 1;
    }
    println!(
        "criterion 8 PASS: non-increasing objectives and byte-identical reruns on {checked} \
         random coresets"
    );
}

// Timing-sensitive criteria share a lock so they never overlap.
static TIMING_LOCK: Mutex<()> = Mutex::new(());

/// Shared large star-schema dataset: |X| = 2,000,000 from 90,000 input
/// rows (ratio > 20x).
static STAR_DATA: LazyLock<(tempfile::TempDir, PathBuf)> = LazyLock::new(|| {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        keys_p: 1000,
        keys_s: 1000,
        sparsity: 0.08,
        reps_p: 5,
        reps_s: 5,
        clusters: 5,
        spread: 60.0,
        jitter: 10.0,
        round_decimals: 2,
        seed: 77,
        ..SynthSpec::default()
    };
    let summary = generate(&spec, dir.path()).unwrap();
    assert_eq!(summary.expected_join_rows, 2_000_000);
    assert!(summary.expected_join_rows >= 20 * summary.total_input_rows);
    let path = summary.config_path.clone();
    (dir, path)
});

/// End-to-end pipeline time beats materializing the join at all, and the
/// coreset stays far below the join cardinality.
#[test]
fn criterion_09_runtime_direction() {
    let _guard = TIMING_LOCK.lock().unwrap();
    let (_dir, config_path) = &*STAR_DATA;
    let overrides = Overrides {
        k: Some(5),
        kappa: Some(5),
        ..Overrides::default()
    };
    let config = RunConfig::load(config_path, &overrides).unwrap();

    let inputs = load_inputs(&config).unwrap();
    let relations = inputs.relations.clone();
    let query = inputs.query.clone();
    let output = run_pipeline_on(inputs, &config).unwrap();
    let pipeline_ms = output.report.total_ms;

    let tree = build_join_tree(&query, relations).unwrap();
    let start = Instant::now();
    let matrix = materialize_join(&tree, &query.features, 10_000_000).unwrap();
    let materialize_ms = start.elapsed().as_secs_f64() * 1e3;

    assert_eq!(matrix.total_weight(), 2_000_000);
    assert_eq!(output.report.join_cardinality, 2_000_000);
    assert!(
        pipeline_ms < materialize_ms,
        "pipeline {pipeline_ms:.0} ms should beat materialization {materialize_ms:.0} ms"
    );
    assert!(
        (output.report.coreset_size as u64) < output.report.join_cardinality / 10,
        "|G| = {} should be far below |X|/10",
        output.report.coreset_size
    );
    println!(
        "criterion 9 PASS: pipeline {pipeline_ms:.0} ms < materialization alone \
         {materialize_ms:.0} ms on |X| = 2,000,000 (>= 20x input); |G| = {} < |X|/10",
        output.report.coreset_size
    );
}

/// kappa < k trades a faster run for a bounded loss: with k = 20, the
/// kappa = 10 run is faster than kappa = 20 and its full-matrix objective
/// is within 50% of the kappa = 20 objective.
#[test]
fn criterion_10_kappa_tradeoff() {
    let _guard = TIMING_LOCK.lock().unwrap();
    let (_dir, config_path) = &*STAR_DATA;

    let run = |kappa: usize| {
        let overrides = Overrides {
            k: Some(20),
            kappa: Some(kappa),
            seed: Some(5),
            ..Overrides::default()
        };
        let config = RunConfig::load(config_path, &overrides).unwrap();
        let inputs = load_inputs(&config).unwrap();
        run_pipeline_on(inputs, &config).unwrap()
    };
    let fast = run(10);
    let full = run(20);
    assert!(
        fast.report.total_ms < full.report.total_ms,
        "kappa=10 took {:.0} ms, kappa=20 took {:.0} ms",
        fast.report.total_ms,
        full.report.total_ms
    );

    // objective comparison on the materialized matrix
    let overrides = Overrides {
        k: Some(20),
        ..Overrides::default()
    };
    let config = RunConfig::load(config_path, &overrides).unwrap();
    let inputs = load_inputs(&config).unwrap();
    let tree = build_join_tree(&inputs.query, inputs.relations).unwrap();
    let matrix = materialize_join(&tree, &inputs.query.features, 10_000_000).unwrap();
    let obj_fast = evaluate_objective(&matrix, &fast.clustering.centroids, None).unwrap();
    let obj_full = evaluate_objective(&matrix, &full.clustering.centroids, None).unwrap();
    assert!(
        obj_fast < 1.5 * obj_full,
        "kappa=10 objective {obj_fast} exceeds kappa=20 objective {obj_full} by >= 50%"
    );
    println!(
        "criterion 10 PASS: kappa=10 ran in {:.0} ms vs {:.0} ms for kappa=20; objective excess \
         {:.1}% (< 50%)",
        fast.report.total_ms,
        full.report.total_ms,
        (obj_fast / obj_full - 1.0) * 100.0
    );
}

// ---------------------------------------------------------------------
// oracles used by criterion 3
// ---------------------------------------------------------------------

/// Minimum weighted SSE over contiguous partitions of the sorted values.
fn brute_force_contiguous(values: &[f64], weights: &[f64], kappa: usize) -> f64 {
    fn sse(values: &[f64], weights: &[f64]) -> f64 {
        let w: f64 = weights.iter().sum();
        let mean = values
            .iter()
            .zip(weights)
            .map(|(x, wi)| x * wi)
            .sum::<f64>()
            / w;
        values
            .iter()
            .zip(weights)
            .map(|(x, wi)| wi * (x - mean) * (x - mean))
            .sum()
    }
    fn go(values: &[f64], weights: &[f64], parts: usize) -> f64 {
        if values.len() <= parts {
            return 0.0;
        }
        if parts == 1 {
            return sse(values, weights);
        }
        let mut best = f64::INFINITY;
        for cut in 1..=(values.len() - parts + 1) {
            let head = sse(&values[..cut], &weights[..cut]);
            let tail = go(&values[cut..], &weights[cut..], parts - 1);
            if head + tail < best {
                best = head + tail;
            }
        }
        best
    }
    go(values, weights, kappa.min(values.len()))
}

/// Visits every partition of {0..n-1} into at most `max_parts` nonempty
/// parts, as restricted-growth strings.
fn enumerate_set_partitions(n: usize, max_parts: usize, visit: &mut impl FnMut(&[usize])) {
    fn go(assign: &mut Vec<usize>, at: usize, max_parts: usize, visit: &mut impl FnMut(&[usize])) {
        if at == assign.len() {
            visit(assign);
            return;
        }
        let used = assign[..at].iter().copied().max().unwrap_or(0) + 1;
        for p in 0..=used.min(max_parts - 1) {
            assign[at] = p;
            go(assign, at + 1, max_parts, visit);
        }
    }
    if n == 0 {
        return;
    }
    let mut assign = vec![0usize; n];
    go(&mut assign, 1, max_parts, visit);
}
