//! The weighted grid coreset: per-feature centroid ids span a grid, and
//! each relation's feature columns are quantized to centroid ids so that
//! one more pass of join-tree aggregation (grouped by the id columns)
//! yields exactly the nonzero-weight grid cells with exact integer
//! weights.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::aggregate::{AggNode, AggregateError, Topology, up_sweep};
use crate::marginal::topology;
use crate::query::{FeatureRef, JoinTree};
use crate::schema::FdChain;
use crate::solvers::SubspaceCentroids;
use crate::value::Value;

#[derive(Debug, thiserror::Error)]
pub enum CoresetError {
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("dims must match the query features: expected `{expected}`, got `{got}`")]
    FeatureMismatch { expected: String, got: String },
}

/// One nonzero-weight grid cell: a tuple of per-feature centroid ids and
/// the total join-result mass quantized into the cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridPoint {
    pub coords: Vec<u32>,
    pub weight: u64,
}

/// The weighted grid coreset. Points are sorted by coordinates and carry
/// strictly positive weights summing to the join cardinality.
#[derive(Clone, Debug)]
pub struct GridCoreset {
    pub points: Vec<GridPoint>,
    pub dims: Vec<SubspaceCentroids>,
    pub total_weight: u64,
}

impl GridCoreset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of features (grid dimensions).
    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }
}

/// A join tree whose feature columns have been replaced by centroid ids.
/// Only join-relevant raw columns are retained; rows are re-deduplicated
/// with summed multiplicities.
pub struct QuantizedTree {
    topo: Topology,
    nodes: Vec<AggNode>,
}

/// Quantizes every relation of a (semijoin-reduced) tree against the given
/// per-feature centroid sets. `dims` must be ordered like `features`.
pub fn quantize_relations(
    tree: &JoinTree,
    dims: &[SubspaceCentroids],
    features: &[FeatureRef],
) -> Result<QuantizedTree, CoresetError> {
    for (dim, feature) in dims.iter().zip(features) {
        if dim.feature() != feature.attribute {
            return Err(CoresetError::FeatureMismatch {
                expected: feature.attribute.clone(),
                got: String::from(dim.feature()),
            });
        }
    }

    let topo = topology(tree);
    let mut nodes = Vec::with_capacity(tree.node_count());
    for v in 0..tree.node_count() {
        let rel = tree.relation(v);

        // Columns that drive joins at this node: the parent edge plus every
        // child edge. Everything else only contributes multiplicity.
        let mut join_attrs: Vec<&str> = tree
            .parent_join_attrs(v)
            .iter()
            .map(String::as_str)
            .collect();
        for &c in tree.children(v) {
            join_attrs.extend(tree.parent_join_attrs(c).iter().map(String::as_str));
        }
        join_attrs.sort_unstable();
        join_attrs.dedup();
        let join_cols: Vec<usize> = join_attrs
            .iter()
            .map(|a| rel.attribute_index(a).expect("edge attr"))
            .collect();

        // Features owned by this node, in global feature order.
        let local: Vec<(usize, usize)> = features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.relation == rel.name())
            .map(|(j, f)| (j, rel.attribute_index(&f.attribute).expect("feature attr")))
            .collect();

        // Quantize and re-deduplicate.
        let mut dedup: BTreeMap<(Vec<Value>, Vec<u32>), u64> = BTreeMap::new();
        for (row_idx, row) in rel.rows().iter().enumerate() {
            let key: Vec<Value> = join_cols.iter().map(|&i| row[i].clone()).collect();
            let grid: Vec<u32> = local
                .iter()
                .map(|&(j, col)| dims[j].quantize(&row[col]))
                .collect();
            *dedup.entry((key, grid)).or_insert(0) += rel.multiplicity()[row_idx];
        }

        let attr_pos = |name: &str| {
            join_attrs
                .iter()
                .position(|a| *a == name)
                .expect("join attr")
        };
        let up_idx: Vec<usize> = tree
            .parent_join_attrs(v)
            .iter()
            .map(|a| attr_pos(a))
            .collect();
        let child_idx: Vec<Vec<usize>> = tree
            .children(v)
            .iter()
            .map(|&c| {
                tree.parent_join_attrs(c)
                    .iter()
                    .map(|a| attr_pos(a))
                    .collect()
            })
            .collect();

        let mut mult = Vec::with_capacity(dedup.len());
        let mut up_keys = Vec::with_capacity(dedup.len());
        let mut child_keys: Vec<Vec<Vec<Value>>> = child_idx
            .iter()
            .map(|_| Vec::with_capacity(dedup.len()))
            .collect();
        let mut carries = Vec::with_capacity(dedup.len());
        for ((key, grid), m) in dedup {
            mult.push(m);
            up_keys.push(up_idx.iter().map(|&i| key[i].clone()).collect());
            for (slot, idx) in child_idx.iter().enumerate() {
                child_keys[slot].push(idx.iter().map(|&i| key[i].clone()).collect());
            }
            carries.push(grid);
        }

        nodes.push(AggNode {
            mult,
            up_keys,
            child_keys,
            carries,
            carry_features: local.iter().map(|&(j, _)| j).collect(),
        });
    }

    Ok(QuantizedTree { topo, nodes })
}

/// Aggregates the quantized tree grouped by the centroid-id columns. The
/// output holds exactly the grid cells with nonzero weight.
pub fn build_coreset(
    quantized: &QuantizedTree,
    dims: Vec<SubspaceCentroids>,
) -> Result<GridCoreset, CoresetError> {
    let up = up_sweep(&quantized.topo, &quantized.nodes)?;
    debug_assert!(
        up.subtree_features[quantized.topo.root]
            .iter()
            .copied()
            .eq(0..dims.len()),
        "root message must carry every feature"
    );
    let root_message = &up.messages[quantized.topo.root];

    let mut points = Vec::with_capacity(root_message.len());
    let mut total_weight = 0u64;
    for ((key, coords), &weight) in root_message {
        debug_assert!(key.is_empty(), "root message must not be keyed");
        debug_assert!(weight > 0);
        total_weight = total_weight
            .checked_add(weight)
            .ok_or(AggregateError::CountOverflow)?;
        points.push(GridPoint {
            coords: coords.clone(),
            weight,
        });
    }
    Ok(GridCoreset {
        points,
        dims,
        total_weight,
    })
}

/// Report of the grid-size bound implied by declared FD chains:
/// `prod over chains (1 + d_i (kappa - 1)) * kappa^(features not in any chain)`.
#[derive(Clone, Debug)]
pub struct FdBoundReport {
    pub points: usize,
    /// Bound using the declared chains.
    pub chain_bound: u128,
    /// The no-FD bound kappa^m for comparison.
    pub naive_bound: u128,
    pub holds: bool,
}

/// Checks the coreset size against the FD-chain bound. A violation means
/// either an implementation bug or an FD declaration that does not hold.
pub fn check_fd_bound(
    coreset: &GridCoreset,
    chains: &[FdChain],
    features: &[FeatureRef],
    kappa: usize,
) -> FdBoundReport {
    let kappa = kappa as u128;
    let mut chained: alloc::collections::BTreeSet<&str> = alloc::collections::BTreeSet::new();
    let mut chain_bound: u128 = 1;
    for chain in chains {
        let d = chain.features.len() as u128;
        chain_bound = chain_bound.saturating_mul(1 + d * (kappa - 1));
        for f in &chain.features {
            chained.insert(f.as_str());
        }
    }
    let mut naive_bound: u128 = 1;
    for f in features {
        naive_bound = naive_bound.saturating_mul(kappa);
        if !chained.contains(f.attribute.as_str()) {
            chain_bound = chain_bound.saturating_mul(kappa);
        }
    }
    FdBoundReport {
        points: coreset.len(),
        chain_bound,
        naive_bound,
        holds: (coreset.len() as u128) <= chain_bound,
    }
}
