//! Cross-module integration: the full in-memory pipeline on a worked
//! example, plus property tests for the structural invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use relkm_core::coreset::{build_coreset, quantize_relations};
use relkm_core::lloyd::{LloydConfig, run_weighted_kmeans};
use relkm_core::marginal::{compute_join_count, compute_marginals, semijoin_reduce};
use relkm_core::query::build_join_tree;
use relkm_core::solvers::{solve_categorical, solve_continuous_1d, solve_subspace};
use relkm_core::{
    AttributeKind, AttributeRole, AttributeSpec, FeatureRef, JoinQuery, MarginalTable, Relation,
    Value,
};

fn example() -> (JoinQuery, Vec<Relation>) {
    let r = Relation::from_rows(
        "r",
        vec![
            AttributeSpec::new("a", AttributeKind::Continuous, AttributeRole::Feature),
            AttributeSpec::new("b", AttributeKind::Categorical, AttributeRole::JoinKey),
        ],
        vec![
            vec![Value::num(1.0), Value::str("x")],
            vec![Value::num(1.0), Value::str("y")],
            vec![Value::num(2.0), Value::str("x")],
        ],
    )
    .unwrap();
    let s = Relation::from_rows(
        "s",
        vec![
            AttributeSpec::new("b", AttributeKind::Categorical, AttributeRole::JoinKey),
            AttributeSpec::new("c", AttributeKind::Continuous, AttributeRole::Feature),
        ],
        vec![
            vec![Value::str("x"), Value::num(10.0)],
            vec![Value::str("x"), Value::num(20.0)],
            vec![Value::str("y"), Value::num(10.0)],
        ],
    )
    .unwrap();
    let query = JoinQuery {
        relations: vec!["r".into(), "s".into()],
        features: vec![FeatureRef::new("r", "a"), FeatureRef::new("s", "c")],
    };
    (query, vec![r, s])
}

#[test]
fn end_to_end_on_the_worked_example() {
    let (query, relations) = example();
    let kinds = [AttributeKind::Continuous, AttributeKind::Continuous];
    let tree = build_join_tree(&query, relations).unwrap();
    let tree = semijoin_reduce(&tree).unwrap();
    let count = compute_join_count(&tree).unwrap();
    assert_eq!(count, 5);

    let marginals = compute_marginals(&tree, &query.features).unwrap();
    let dims: Vec<_> = marginals
        .iter()
        .zip(kinds)
        .map(|(m, kind)| solve_subspace(m, kind, 2).unwrap())
        .collect();
    // both features have 2 distinct values, so kappa = 2 is exact
    assert!(dims.iter().all(|d| d.cost() == 0.0));

    let quantized = quantize_relations(&tree, &dims, &query.features).unwrap();
    let coreset = build_coreset(&quantized, dims).unwrap();
    assert_eq!(coreset.total_weight, 5);
    assert_eq!(coreset.len(), 4);

    // k = |G| reproduces every cell: objective 0
    let result = run_weighted_kmeans(&coreset, 4, 1, &LloydConfig::default()).unwrap();
    assert_eq!(result.objective, 0.0);
}

/// A compact random-instance model: two relations joined on one key.
#[derive(Debug, Clone)]
struct TwoRelation {
    left: Vec<(u8, u8)>,
    right: Vec<(u8, u8)>,
}

fn two_relation_strategy() -> impl Strategy<Value = TwoRelation> {
    let row = || (0u8..4, 0u8..5);
    (
        proptest::collection::vec(row(), 1..12),
        proptest::collection::vec(row(), 1..12),
    )
        .prop_map(|(left, right)| TwoRelation { left, right })
}

fn build_two_relation(instance: &TwoRelation) -> (JoinQuery, Vec<Relation>) {
    let left_rows = instance
        .left
        .iter()
        .map(|(key, feat)| vec![Value::str(format!("j{key}")), Value::num(*feat as f64)])
        .collect();
    let right_rows = instance
        .right
        .iter()
        .map(|(key, feat)| {
            vec![
                Value::str(format!("j{key}")),
                Value::str(format!("t{feat}")),
            ]
        })
        .collect();
    let l = Relation::from_rows(
        "l",
        vec![
            AttributeSpec::new("k", AttributeKind::Categorical, AttributeRole::JoinKey),
            AttributeSpec::new("x", AttributeKind::Continuous, AttributeRole::Feature),
        ],
        left_rows,
    )
    .unwrap();
    let r = Relation::from_rows(
        "r",
        vec![
            AttributeSpec::new("k", AttributeKind::Categorical, AttributeRole::JoinKey),
            AttributeSpec::new("y", AttributeKind::Categorical, AttributeRole::Feature),
        ],
        right_rows,
    )
    .unwrap();
    let query = JoinQuery {
        relations: vec!["l".into(), "r".into()],
        features: vec![FeatureRef::new("l", "x"), FeatureRef::new("r", "y")],
    };
    (query, vec![l, r])
}

/// Brute-force join count for the two-relation model: every raw row pair
/// with matching keys contributes one tuple.
fn oracle_count(instance: &TwoRelation) -> u64 {
    let mut left: BTreeMap<u8, u64> = BTreeMap::new();
    for (key, _) in &instance.left {
        *left.entry(*key).or_insert(0) += 1;
    }
    let mut count = 0;
    for (key, _) in &instance.right {
        count += left.get(key).copied().unwrap_or(0);
    }
    count
}

proptest! {
    /// Join counts equal brute-force pair counting.
    #[test]
    fn join_count_matches_pair_counting(instance in two_relation_strategy()) {
        let (query, relations) = build_two_relation(&instance);
        let tree = build_join_tree(&query, relations).unwrap();
        prop_assert_eq!(compute_join_count(&tree).unwrap(), oracle_count(&instance));
    }

    /// Every feature's marginal weights sum to the join cardinality, and
    /// semijoin reduction never changes the count.
    #[test]
    fn marginal_mass_conservation(instance in two_relation_strategy()) {
        let (query, relations) = build_two_relation(&instance);
        let tree = build_join_tree(&query, relations).unwrap();
        let count = compute_join_count(&tree).unwrap();
        for table in compute_marginals(&tree, &query.features).unwrap() {
            prop_assert_eq!(table.total, count);
            prop_assert_eq!(table.entries.values().sum::<u64>(), count);
            prop_assert!(table.entries.values().all(|&w| w > 0));
        }
        let reduced = semijoin_reduce(&tree).unwrap();
        prop_assert_eq!(compute_join_count(&reduced).unwrap(), count);
        for v in 0..reduced.node_count() {
            prop_assert!(reduced.relation(v).row_count() <= tree.relation(v).row_count());
        }
    }

    /// Coreset mass equals the join cardinality for any kappa, and every
    /// stored cell has positive weight and in-range coordinates.
    #[test]
    fn coreset_mass_conservation(instance in two_relation_strategy(), kappa in 1usize..5) {
        let (query, relations) = build_two_relation(&instance);
        let kinds = [AttributeKind::Continuous, AttributeKind::Categorical];
        let tree = build_join_tree(&query, relations).unwrap();
        let reduced = semijoin_reduce(&tree).unwrap();
        let count = compute_join_count(&reduced).unwrap();
        prop_assume!(count > 0);
        let marginals = compute_marginals(&reduced, &query.features).unwrap();
        let dims: Vec<_> = marginals
            .iter()
            .zip(kinds)
            .map(|(m, kind)| solve_subspace(m, kind, kappa).unwrap())
            .collect();
        let counts: Vec<usize> = dims.iter().map(|d| d.count()).collect();
        let quantized = quantize_relations(&reduced, &dims, &query.features).unwrap();
        let coreset = build_coreset(&quantized, dims).unwrap();
        prop_assert_eq!(coreset.total_weight, count);
        for point in &coreset.points {
            prop_assert!(point.weight > 0);
            for (j, &id) in point.coords.iter().enumerate() {
                prop_assert!((id as usize) < counts[j]);
            }
        }
    }

    /// Subsolver cost is non-increasing in kappa for both kinds.
    #[test]
    fn subsolver_cost_monotone_in_kappa(
        weights in proptest::collection::btree_map(0u8..12, 1u64..9, 1..10)
    ) {
        let continuous = MarginalTable {
            feature: "x".into(),
            entries: weights.iter().map(|(v, w)| (Value::num(*v as f64 * 0.5), *w)).collect(),
            total: weights.values().sum(),
        };
        let categorical = MarginalTable {
            feature: "y".into(),
            entries: weights.iter().map(|(v, w)| (Value::str(format!("t{v}")), *w)).collect(),
            total: weights.values().sum(),
        };
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for kappa in 1..=6 {
            let cont = solve_continuous_1d(&continuous, kappa).unwrap().cost();
            let cat = solve_categorical(&categorical, kappa).unwrap().cost();
            prop_assert!(cont <= prev.0 + 1e-9);
            prop_assert!(cat <= prev.1 + 1e-9);
            prev = (cont, cat);
        }
    }

    /// Join trees satisfy running intersection and are reproducible.
    #[test]
    fn join_tree_structure(instance in two_relation_strategy()) {
        let (query, relations) = build_two_relation(&instance);
        let t1 = build_join_tree(&query, relations.clone()).unwrap();
        let t2 = build_join_tree(&query, relations).unwrap();
        prop_assert!(t1.running_intersection_holds());
        prop_assert_eq!(t1.root(), t2.root());
        for v in 0..t1.node_count() {
            prop_assert_eq!(t1.parent(v), t2.parent(v));
        }
    }
}
