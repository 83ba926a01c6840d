//! Desk-scale verification backend: materialize the join, one-hot encode,
//! brute-force tiny k-means instances, and evaluate centroid sets against
//! the full data matrix.
//!
//! Everything here is written for clarity and independence from the
//! streaming aggregation path it cross-checks; one-hot encoding is
//! materialized only inside this module.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::lloyd::{Centroid, CentroidComponent};
use crate::marginal::{compute_join_count, semijoin_reduce};
use crate::query::{FeatureRef, JoinTree};
use crate::schema::AttributeKind;
use crate::solvers::{GridComponent, SubspaceCentroids};
use crate::value::Value;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Aggregate(#[from] crate::aggregate::AggregateError),
    #[error("estimated join cardinality {estimate} exceeds the materialization cap {cap}")]
    CapExceeded { estimate: u64, cap: u64 },
    #[error("instance too large for brute force: {rows} distinct rows, k = {k}")]
    BruteForceTooLarge { rows: usize, k: usize },
    #[error("grid too large to enumerate: {cells} cells")]
    GridTooLarge { cells: u128 },
    #[error("centroid layout mismatch: unknown token `{token}` for feature `{feature}`")]
    LayoutMismatch { feature: String, token: String },
    #[error("expected {expected} feature components, got {got}")]
    ComponentCount { expected: usize, got: usize },
}

#[derive(Clone, Debug)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: AttributeKind,
}

/// Dense one-hot layout: continuous features take one dimension,
/// categorical features one dimension per distinct token (sorted).
#[derive(Clone, Debug)]
pub struct OneHotLayout {
    pub spans: Vec<FeatureSpan>,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub enum FeatureSpan {
    Continuous { offset: usize },
    Categorical { offset: usize, tokens: Vec<String> },
}

impl OneHotLayout {
    fn from_rows(features: &[FeatureMeta], rows: &[Vec<Value>]) -> OneHotLayout {
        let mut spans = Vec::with_capacity(features.len());
        let mut offset = 0;
        for (j, meta) in features.iter().enumerate() {
            match meta.kind {
                AttributeKind::Continuous => {
                    spans.push(FeatureSpan::Continuous { offset });
                    offset += 1;
                }
                AttributeKind::Categorical => {
                    let mut tokens: Vec<String> = rows
                        .iter()
                        .map(|r| String::from(r[j].as_str().expect("categorical value")))
                        .collect();
                    tokens.sort_unstable();
                    tokens.dedup();
                    let width = tokens.len();
                    spans.push(FeatureSpan::Categorical { offset, tokens });
                    offset += width;
                }
            }
        }
        OneHotLayout { spans, dim: offset }
    }

    fn token_offset(&self, feature: usize, token: &str) -> Option<usize> {
        match &self.spans[feature] {
            FeatureSpan::Categorical { offset, tokens } => tokens
                .binary_search_by(|t| t.as_str().cmp(token))
                .ok()
                .map(|i| offset + i),
            FeatureSpan::Continuous { .. } => None,
        }
    }

    /// Dimension range of one feature's block.
    fn span_range(&self, feature: usize) -> (usize, usize) {
        match &self.spans[feature] {
            FeatureSpan::Continuous { offset } => (*offset, offset + 1),
            FeatureSpan::Categorical { offset, tokens } => (*offset, offset + tokens.len()),
        }
    }
}

/// The materialized, deduplicated join result projected to the features.
#[derive(Clone, Debug)]
pub struct DataMatrix {
    pub features: Vec<FeatureMeta>,
    pub rows: Vec<Vec<Value>>,
    pub weights: Vec<u64>,
    pub layout: OneHotLayout,
}

impl DataMatrix {
    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// One-hot dimensionality D.
    pub fn one_hot_dim(&self) -> usize {
        self.layout.dim
    }

    pub fn encode_row(&self, i: usize) -> Vec<f64> {
        let mut dense = alloc::vec![0.0; self.layout.dim];
        for (j, v) in self.rows[i].iter().enumerate() {
            match (&self.layout.spans[j], v) {
                (FeatureSpan::Continuous { offset }, Value::Num(x)) => dense[*offset] = x.get(),
                (FeatureSpan::Categorical { .. }, Value::Str(s)) => {
                    let at = self.layout.token_offset(j, s).expect("token in layout");
                    dense[at] = 1.0;
                }
                _ => unreachable!("row kind matches layout"),
            }
        }
        dense
    }
}

/// Materializes the inner join projected to the features, refusing when
/// the exact cardinality exceeds `cap`.
pub fn materialize_join(
    tree: &JoinTree,
    features: &[FeatureRef],
    cap: u64,
) -> Result<DataMatrix, OracleError> {
    let estimate = compute_join_count(tree)?;
    if estimate > cap {
        return Err(OracleError::CapExceeded { estimate, cap });
    }
    let reduced = semijoin_reduce(tree)?;

    let metas: Vec<FeatureMeta> = features
        .iter()
        .map(|f| {
            let rel = reduced.relation(reduced.node_by_name(&f.relation).expect("relation"));
            let kind = rel.attributes()[rel.attribute_index(&f.attribute).expect("attribute")].kind;
            FeatureMeta {
                name: f.attribute.clone(),
                kind,
            }
        })
        .collect();

    // Bottom-up fold: each node's table maps its parent-edge key to the
    // subtree's (feature values, weight) expansions. After full semijoin
    // reduction every partial tuple extends to the root, so intermediate
    // tables never exceed the output size.
    type SubRows = Vec<(Vec<(usize, Value)>, u64)>;
    let mut tables: Vec<BTreeMap<Vec<Value>, SubRows>> =
        (0..reduced.node_count()).map(|_| BTreeMap::new()).collect();

    for v in reduced.post_order() {
        let rel = reduced.relation(v);
        let local: Vec<(usize, usize)> = features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.relation == rel.name())
            .map(|(j, f)| (j, rel.attribute_index(&f.attribute).expect("feature attr")))
            .collect();
        let up_idx: Vec<usize> = reduced
            .parent_join_attrs(v)
            .iter()
            .map(|a| rel.attribute_index(a).expect("edge attr"))
            .collect();
        let child_idx: Vec<Vec<usize>> = reduced
            .children(v)
            .iter()
            .map(|&c| {
                reduced
                    .parent_join_attrs(c)
                    .iter()
                    .map(|a| rel.attribute_index(a).expect("edge attr"))
                    .collect()
            })
            .collect();

        let mut table: BTreeMap<Vec<Value>, SubRows> = BTreeMap::new();
        for (row_idx, row) in rel.rows().iter().enumerate() {
            let mut child_rows: Vec<&SubRows> = Vec::with_capacity(child_idx.len());
            let mut dead = false;
            for (slot, &child) in reduced.children(v).iter().enumerate() {
                let key: Vec<Value> = child_idx[slot].iter().map(|&i| row[i].clone()).collect();
                match tables[child].get(&key) {
                    Some(sub) => child_rows.push(sub),
                    None => {
                        dead = true;
                        break;
                    }
                }
            }
            if dead {
                continue;
            }

            let base: Vec<(usize, Value)> = local
                .iter()
                .map(|&(j, col)| (j, row[col].clone()))
                .collect();
            let up_key: Vec<Value> = up_idx.iter().map(|&i| row[i].clone()).collect();
            let out = table.entry(up_key).or_default();

            let mut cursor = alloc::vec![0usize; child_rows.len()];
            loop {
                let mut feats = base.clone();
                let mut weight = rel.multiplicity()[row_idx];
                for (slot, &pos) in cursor.iter().enumerate() {
                    let (sub_feats, sub_w) = &child_rows[slot][pos];
                    feats.extend(sub_feats.iter().cloned());
                    weight *= sub_w;
                }
                out.push((feats, weight));

                let mut wrapped = true;
                for i in (0..cursor.len()).rev() {
                    cursor[i] += 1;
                    if cursor[i] < child_rows[i].len() {
                        wrapped = false;
                        break;
                    }
                    cursor[i] = 0;
                }
                if wrapped {
                    break;
                }
            }
        }
        tables[v] = table;
    }

    let mut dedup: BTreeMap<Vec<Value>, u64> = BTreeMap::new();
    if let Some(root_rows) = tables[reduced.root()].get(&Vec::new()) {
        for (feats, weight) in root_rows {
            let mut sorted = feats.clone();
            sorted.sort_by_key(|(j, _)| *j);
            let tuple: Vec<Value> = sorted.into_iter().map(|(_, v)| v).collect();
            *dedup.entry(tuple).or_insert(0) += weight;
        }
    }

    let mut rows = Vec::with_capacity(dedup.len());
    let mut weights = Vec::with_capacity(dedup.len());
    for (row, w) in dedup {
        rows.push(row);
        weights.push(w);
    }
    let layout = OneHotLayout::from_rows(&metas, &rows);
    Ok(DataMatrix {
        features: metas,
        rows,
        weights,
        layout,
    })
}

fn block_distance_sq(a: &[f64], b: &[f64], lo: usize, hi: usize) -> f64 {
    let mut d = 0.0;
    for i in lo..hi {
        let t = a[i] - b[i];
        d += t * t;
    }
    d
}

fn weighted_distance_sq(layout: &OneHotLayout, lambda: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for (j, &l) in lambda.iter().enumerate() {
        let (lo, hi) = layout.span_range(j);
        d += l * block_distance_sq(a, b, lo, hi);
    }
    d
}

fn unit_weights(m: usize) -> Vec<f64> {
    alloc::vec![1.0; m]
}

/// Exact minimum of the weighted k-means objective over all partitions of
/// the rows into at most `k` clusters, with weighted-mean centroids.
#[derive(Clone, Debug)]
pub struct BruteForceResult {
    pub objective: f64,
    pub centroids: Vec<Vec<f64>>,
}

pub const BRUTE_FORCE_MAX_ROWS: usize = 10;
pub const BRUTE_FORCE_MAX_K: usize = 4;

pub fn brute_force_kmeans(
    matrix: &DataMatrix,
    k: usize,
    lambda: Option<&[f64]>,
) -> Result<BruteForceResult, OracleError> {
    let lambda = lambda
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| unit_weights(matrix.features.len()));
    let dense: Vec<Vec<f64>> = (0..matrix.rows.len())
        .map(|i| matrix.encode_row(i))
        .collect();
    brute_force_impl(
        &dense,
        &matrix.weights,
        k,
        Some((&matrix.layout, lambda.as_slice())),
    )
}

/// Brute force over arbitrary weighted dense points under the plain
/// squared Euclidean distance.
pub fn brute_force_kmeans_points(
    points: &[Vec<f64>],
    weights: &[u64],
    k: usize,
) -> Result<BruteForceResult, OracleError> {
    brute_force_impl(points, weights, k, None)
}

fn brute_force_impl(
    dense: &[Vec<f64>],
    weights: &[u64],
    k: usize,
    layout: Option<(&OneHotLayout, &[f64])>,
) -> Result<BruteForceResult, OracleError> {
    let n = dense.len();
    if n > BRUTE_FORCE_MAX_ROWS || k > BRUTE_FORCE_MAX_K || k == 0 || n == 0 {
        return Err(OracleError::BruteForceTooLarge { rows: n, k });
    }
    let dim = dense[0].len();
    let distance = |a: &[f64], b: &[f64]| match layout {
        Some((layout, lambda)) => weighted_distance_sq(layout, lambda, a, b),
        None => block_distance_sq(a, b, 0, dim),
    };

    let mut assign = alloc::vec![0usize; n];
    let mut best = BruteForceResult {
        objective: f64::INFINITY,
        centroids: Vec::new(),
    };
    // Restricted-growth enumeration of set partitions into <= k parts.
    enumerate_partitions(&mut assign, 1, k, &mut |assign| {
        let parts = assign.iter().copied().max().unwrap_or(0) + 1;
        let mut centroids = alloc::vec![alloc::vec![0.0; dim]; parts];
        let mut mass = alloc::vec![0.0f64; parts];
        for (i, &p) in assign.iter().enumerate() {
            let w = weights[i] as f64;
            mass[p] += w;
            for (d, x) in dense[i].iter().enumerate() {
                centroids[p][d] += w * x;
            }
        }
        for (c, &m) in centroids.iter_mut().zip(&mass) {
            for x in c.iter_mut() {
                *x /= m;
            }
        }
        let mut objective = 0.0;
        for (i, &p) in assign.iter().enumerate() {
            objective += weights[i] as f64 * distance(&dense[i], &centroids[p]);
        }
        if objective < best.objective {
            best = BruteForceResult {
                objective,
                centroids,
            };
        }
    });
    Ok(best)
}

fn enumerate_partitions(
    assign: &mut [usize],
    at: usize,
    max_parts: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if at == assign.len() {
        visit(assign);
        return;
    }
    let used = assign[..at].iter().copied().max().unwrap_or(0) + 1;
    for p in 0..=used.min(max_parts - 1) {
        assign[at] = p;
        enumerate_partitions(assign, at + 1, max_parts, visit);
    }
}

/// Converts a sparse mixed-type centroid into the matrix's dense layout.
pub fn densify_centroid(matrix: &DataMatrix, centroid: &Centroid) -> Result<Vec<f64>, OracleError> {
    if centroid.components.len() != matrix.features.len() {
        return Err(OracleError::ComponentCount {
            expected: matrix.features.len(),
            got: centroid.components.len(),
        });
    }
    let mut dense = alloc::vec![0.0; matrix.layout.dim];
    for (j, comp) in centroid.components.iter().enumerate() {
        match (comp, &matrix.layout.spans[j]) {
            (CentroidComponent::Continuous(x), FeatureSpan::Continuous { offset }) => {
                dense[*offset] = *x;
            }
            (CentroidComponent::Categorical { coords, .. }, FeatureSpan::Categorical { .. }) => {
                for (token, coord) in coords {
                    let Some(at) = matrix.layout.token_offset(j, token) else {
                        return Err(OracleError::LayoutMismatch {
                            feature: matrix.features[j].name.clone(),
                            token: token.clone(),
                        });
                    };
                    dense[at] = *coord;
                }
            }
            _ => {
                return Err(OracleError::ComponentCount {
                    expected: matrix.features.len(),
                    got: centroid.components.len(),
                });
            }
        }
    }
    Ok(dense)
}

/// Exact weighted SSE of the full matrix against the given centroids.
pub fn evaluate_objective(
    matrix: &DataMatrix,
    centroids: &[Centroid],
    lambda: Option<&[f64]>,
) -> Result<f64, OracleError> {
    let dense: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| densify_centroid(matrix, c))
        .collect::<Result<_, _>>()?;
    evaluate_objective_dense(matrix, &dense, lambda)
}

pub fn evaluate_objective_dense(
    matrix: &DataMatrix,
    centroids: &[Vec<f64>],
    lambda: Option<&[f64]>,
) -> Result<f64, OracleError> {
    let lambda = lambda
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| unit_weights(matrix.features.len()));
    let mut objective = 0.0;
    for i in 0..matrix.rows.len() {
        let row = matrix.encode_row(i);
        let mut best = f64::INFINITY;
        for c in centroids {
            let d = weighted_distance_sq(&matrix.layout, &lambda, &row, c);
            if d < best {
                best = d;
            }
        }
        objective += matrix.weights[i] as f64 * best;
    }
    Ok(objective)
}

/// Per-dimension quantize-then-group-by over the materialized matrix: the
/// independent oracle for coreset weights.
pub fn quantize_group_by(
    matrix: &DataMatrix,
    dims: &[SubspaceCentroids],
) -> BTreeMap<Vec<u32>, u64> {
    let mut cells: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    for (i, row) in matrix.rows.iter().enumerate() {
        let coords: Vec<u32> = dims
            .iter()
            .zip(row)
            .map(|(dim, v)| dim.quantize(v))
            .collect();
        *cells.entry(coords).or_insert(0) += matrix.weights[i];
    }
    cells
}

/// Expands one grid cell into the matrix's dense one-hot layout.
pub fn densify_grid_cell(
    matrix: &DataMatrix,
    dims: &[SubspaceCentroids],
    coords: &[u32],
) -> Result<Vec<f64>, OracleError> {
    let mut dense = alloc::vec![0.0; matrix.layout.dim];
    for (j, dim) in dims.iter().enumerate() {
        let (lo, _) = matrix.layout.span_range(j);
        match dim.component(coords[j]) {
            GridComponent::Continuous(x) => dense[lo] = x,
            GridComponent::Heavy(token) => {
                let at = matrix.layout.token_offset(j, token).ok_or_else(|| {
                    OracleError::LayoutMismatch {
                        feature: matrix.features[j].name.clone(),
                        token: String::from(token),
                    }
                })?;
                dense[at] = 1.0;
            }
            GridComponent::Light { coords: sparse, .. } => {
                for (token, mu) in sparse {
                    let at = matrix.layout.token_offset(j, token).ok_or_else(|| {
                        OracleError::LayoutMismatch {
                            feature: matrix.features[j].name.clone(),
                            token: token.clone(),
                        }
                    })?;
                    dense[at] = *mu;
                }
            }
        }
    }
    Ok(dense)
}

/// Full-grid nearest-cell audit done densely in one-hot space.
#[derive(Clone, Debug)]
pub struct GridAudit {
    /// Total weighted squared distance from each row to its nearest grid
    /// cell (the quantization cost).
    pub cost: f64,
    /// Group-by of rows into their nearest cells.
    pub cells: BTreeMap<Vec<u32>, u64>,
    /// Rows whose dense full-grid argmin disagrees with per-dimension
    /// quantization.
    pub rule_mismatches: usize,
}

pub const GRID_AUDIT_MAX_CELLS: u128 = 1 << 16;

/// Enumerates the full cross-product grid, assigns every matrix row to its
/// nearest cell under the dense one-hot distance (ties to the
/// lexicographically smallest coordinates), and checks the per-dimension
/// quantization rule against it.
pub fn grid_audit(
    matrix: &DataMatrix,
    dims: &[SubspaceCentroids],
) -> Result<GridAudit, OracleError> {
    let mut cell_count: u128 = 1;
    for dim in dims {
        cell_count = cell_count.saturating_mul(dim.count() as u128);
    }
    if cell_count > GRID_AUDIT_MAX_CELLS {
        return Err(OracleError::GridTooLarge { cells: cell_count });
    }

    // Enumerate cells in lexicographic coordinate order.
    let mut coords = alloc::vec![0u32; dims.len()];
    let mut cells_dense: Vec<(Vec<u32>, Vec<f64>)> = Vec::with_capacity(cell_count as usize);
    loop {
        cells_dense.push((coords.clone(), densify_grid_cell(matrix, dims, &coords)?));

        let mut wrapped = true;
        for j in (0..dims.len()).rev() {
            coords[j] += 1;
            if (coords[j] as usize) < dims[j].count() {
                wrapped = false;
                break;
            }
            coords[j] = 0;
        }
        if wrapped || dims.is_empty() {
            break;
        }
    }

    let lambda = unit_weights(dims.len());
    let mut cost = 0.0;
    let mut cells: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    let mut rule_mismatches = 0;
    for (i, row) in matrix.rows.iter().enumerate() {
        let dense = matrix.encode_row(i);
        let mut best = f64::INFINITY;
        let mut best_coords: &[u32] = &[];
        for (cell_coords, cell_dense) in &cells_dense {
            let d = weighted_distance_sq(&matrix.layout, &lambda, &dense, cell_dense);
            if d < best {
                best = d;
                best_coords = cell_coords;
            }
        }
        cost += matrix.weights[i] as f64 * best;
        *cells.entry(best_coords.to_vec()).or_insert(0) += matrix.weights[i];

        let per_dim: Vec<u32> = dims
            .iter()
            .zip(row)
            .map(|(dim, v)| dim.quantize(v))
            .collect();
        if per_dim != best_coords {
            rule_mismatches += 1;
        }
    }
    Ok(GridAudit {
        cost,
        cells,
        rule_mismatches,
    })
}

/// Standard dense weighted k-means (k-means++ then Lloyd), the baseline a
/// materialized matrix would be fed to.
#[derive(Clone, Debug)]
pub struct DenseKMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn dense_weighted_kmeans(
    matrix: &DataMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    lambda: Option<&[f64]>,
) -> Result<DenseKMeansResult, OracleError> {
    let n = matrix.rows.len();
    if k == 0 || n == 0 || k > n {
        return Err(OracleError::BruteForceTooLarge { rows: n, k });
    }
    let lambda = lambda
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| unit_weights(matrix.features.len()));
    let dense: Vec<Vec<f64>> = (0..n).map(|i| matrix.encode_row(i)).collect();
    let weights: Vec<f64> = matrix.weights.iter().map(|&w| w as f64).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(dense[crate::lloyd::weighted_pick(&weights, unit())].clone());
    let mut min_dist = alloc::vec![f64::INFINITY; n];
    while centroids.len() < k {
        let latest = centroids.last().unwrap();
        for i in 0..n {
            let d = weighted_distance_sq(&matrix.layout, &lambda, &dense[i], latest);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
        let scores: Vec<f64> = weights.iter().zip(&min_dist).map(|(w, d)| w * d).collect();
        let total: f64 = scores.iter().sum();
        let next = if total > 0.0 {
            crate::lloyd::weighted_pick(&scores, unit())
        } else {
            (0..n)
                .find(|&i| !centroids.contains(&dense[i]))
                .unwrap_or(0)
        };
        centroids.push(dense[next].clone());
    }

    let mut prev: Option<f64> = None;
    let mut iterations = 0;
    loop {
        let mut assignment = alloc::vec![0usize; n];
        let mut objective = 0.0;
        for i in 0..n {
            let mut best = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = weighted_distance_sq(&matrix.layout, &lambda, &dense[i], centroid);
                if d < best {
                    best = d;
                    assignment[i] = c;
                }
            }
            objective += weights[i] * best;
        }
        let converged = prev.is_some_and(|p| p - objective <= tol * p.max(0.0));
        if iterations >= max_iter || converged {
            return Ok(DenseKMeansResult {
                centroids,
                objective,
                iterations,
            });
        }
        let mut sums = alloc::vec![alloc::vec![0.0; matrix.layout.dim]; k];
        let mut mass = alloc::vec![0.0f64; k];
        for i in 0..n {
            mass[assignment[i]] += weights[i];
            for (d, x) in dense[i].iter().enumerate() {
                sums[assignment[i]][d] += weights[i] * x;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if mass[c] > 0.0 {
                for (d, x) in centroid.iter_mut().enumerate() {
                    *x = sums[c][d] / mass[c];
                }
            }
        }
        prev = Some(objective);
        iterations += 1;
    }
}
