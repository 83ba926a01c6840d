//! Per-feature marginal weights and exact join cardinality, computed
//! without materializing the join.
//!
//! One upward sweep plus one downward sweep gives every row's exact
//! participation count, so all feature marginals come out of two passes
//! regardless of the number of features. Weights stay exact unsigned
//! integers; normalization happens only at reporting boundaries.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub use crate::aggregate::AggregateError;
use crate::aggregate::{AggNode, Topology, UpSweep, down_sweep, full_row_weights, up_sweep};
use crate::query::{FeatureRef, JoinTree};
use crate::value::Value;

/// Total join-result weight of each value of one feature. Zero-weight
/// values are omitted; the weights of every feature sum to the join
/// cardinality.
#[derive(Clone, Debug)]
pub struct MarginalTable {
    pub feature: String,
    pub entries: BTreeMap<Value, u64>,
    pub total: u64,
}

/// Per-row counts of join rows extending a relation's rows downward in the
/// tree (the upward message contribution). Rows with count 0 are retained.
#[derive(Clone, Debug)]
pub struct CountAnnotatedRelation {
    pub node: usize,
    pub counts: Vec<u64>,
}

pub(crate) fn topology(tree: &JoinTree) -> Topology {
    Topology {
        root: tree.root(),
        children: (0..tree.node_count())
            .map(|v| tree.children(v).to_vec())
            .collect(),
        post_order: tree.post_order(),
    }
}

/// Builds plain (carry-free) engine nodes from the tree relations.
pub(crate) fn plain_nodes(tree: &JoinTree) -> Vec<AggNode> {
    (0..tree.node_count())
        .map(|v| {
            let rel = tree.relation(v);
            let project = |attrs: &[String]| -> Vec<usize> {
                attrs
                    .iter()
                    .map(|a| rel.attribute_index(a).expect("edge attribute exists"))
                    .collect()
            };
            let up_idx = project(tree.parent_join_attrs(v));
            let child_idx: Vec<Vec<usize>> = tree
                .children(v)
                .iter()
                .map(|&c| project(tree.parent_join_attrs(c)))
                .collect();

            let rows = rel.rows();
            AggNode {
                mult: rel.multiplicity().to_vec(),
                up_keys: rows
                    .iter()
                    .map(|r| up_idx.iter().map(|&i| r[i].clone()).collect())
                    .collect(),
                child_keys: child_idx
                    .iter()
                    .map(|idx| {
                        rows.iter()
                            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                            .collect()
                    })
                    .collect(),
                carries: alloc::vec![Vec::new(); rows.len()],
                carry_features: Vec::new(),
            }
        })
        .collect()
}

fn run_up(tree: &JoinTree) -> Result<(Topology, Vec<AggNode>, UpSweep), AggregateError> {
    let topo = topology(tree);
    let nodes = plain_nodes(tree);
    let up = up_sweep(&topo, &nodes)?;
    Ok((topo, nodes, up))
}

/// Exact number of tuples in the join result, with multiplicities.
pub fn compute_join_count(tree: &JoinTree) -> Result<u64, AggregateError> {
    let (topo, _, up) = run_up(tree)?;
    let mut total = 0u64;
    for &count in up.messages[topo.root].values() {
        total = total
            .checked_add(count)
            .ok_or(AggregateError::CountOverflow)?;
    }
    Ok(total)
}

/// Per-row downward extension counts for every tree node.
pub fn annotate_counts(tree: &JoinTree) -> Result<Vec<CountAnnotatedRelation>, AggregateError> {
    let (topo, nodes, up) = run_up(tree)?;
    let mut out = Vec::with_capacity(nodes.len());
    for (v, node) in nodes.iter().enumerate() {
        let mut counts = alloc::vec![0u64; node.row_count()];
        for (row, slot_count) in counts.iter_mut().enumerate() {
            let mut c = node.mult[row];
            for (slot, &child) in topo.children[v].iter().enumerate() {
                let factor = up.messages[child]
                    .get(&(node.child_keys[slot][row].clone(), Vec::new()))
                    .copied()
                    .unwrap_or(0);
                c = c.checked_mul(factor).ok_or(AggregateError::CountOverflow)?;
                if c == 0 {
                    break;
                }
            }
            *slot_count = c;
        }
        out.push(CountAnnotatedRelation { node: v, counts });
    }
    Ok(out)
}

fn per_row_weights(tree: &JoinTree) -> Result<Vec<Vec<u64>>, AggregateError> {
    let (topo, nodes, up) = run_up(tree)?;
    let down = down_sweep(&topo, &nodes, &up)?;
    full_row_weights(&topo, &nodes, &up, &down)
}

/// Computes the exact marginal weight table of every feature.
pub fn compute_marginals(
    tree: &JoinTree,
    features: &[FeatureRef],
) -> Result<Vec<MarginalTable>, AggregateError> {
    let weights = per_row_weights(tree)?;
    let mut tables = Vec::with_capacity(features.len());
    for f in features {
        let v = tree
            .node_by_name(&f.relation)
            .expect("feature relation exists");
        let rel = tree.relation(v);
        let col = rel
            .attribute_index(&f.attribute)
            .expect("feature attribute exists");
        let mut entries: BTreeMap<Value, u64> = BTreeMap::new();
        let mut total = 0u64;
        for (row, &w) in weights[v].iter().enumerate() {
            if w == 0 {
                continue;
            }
            let entry = entries.entry(rel.rows()[row][col].clone()).or_insert(0);
            *entry = entry.checked_add(w).ok_or(AggregateError::CountOverflow)?;
            total = total.checked_add(w).ok_or(AggregateError::CountOverflow)?;
        }
        tables.push(MarginalTable {
            feature: f.attribute.clone(),
            entries,
            total,
        });
    }
    Ok(tables)
}

/// Removes dangling tuples: every surviving row participates in at least
/// one join-result row. The join count is unchanged.
pub fn semijoin_reduce(tree: &JoinTree) -> Result<JoinTree, AggregateError> {
    let weights = per_row_weights(tree)?;
    let reduced: Vec<_> = (0..tree.node_count())
        .map(|v| tree.relation(v).filter_rows(|row| weights[v][row] > 0))
        .collect();
    Ok(tree.with_relations(reduced))
}
