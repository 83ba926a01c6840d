//! Weighted k-means on the grid coreset: k-means++ seeding and Lloyd
//! iterations with sparse categorical distances.
//!
//! A grid cell's component in feature j takes one of at most kappa_j
//! distinct values, so each iteration precomputes a (centroid, feature,
//! component-id) distance table; assignment then costs O(1) per term.
//! With the cached squared norms this keeps an iteration at
//! O((|G| + D) k m) distance terms instead of O(|G| D k m).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::coreset::GridCoreset;
use crate::solvers::{GridComponent, SubspaceCentroids};

#[derive(Debug, thiserror::Error)]
pub enum LloydError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {points} coreset points; lower k (or raise kappa)")]
    KTooLarge { k: usize, points: usize },
    #[error("coreset is empty")]
    EmptyCoreset,
    #[error("feature weights must be {expected} positive finite values")]
    BadFeatureWeights { expected: usize },
}

/// Stopping rule and per-feature distance weights for Lloyd iterations.
#[derive(Clone, Debug)]
pub struct LloydConfig {
    pub max_iter: usize,
    /// Relative objective-decrease threshold.
    pub tol: f64,
    /// Per-feature scale of the distance contribution; `None` means unit
    /// weights.
    pub feature_weights: Option<Vec<f64>>,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            max_iter: 100,
            tol: 1e-4,
            feature_weights: None,
        }
    }
}

impl LloydConfig {
    fn resolve_weights(&self, m: usize) -> Result<Vec<f64>, LloydError> {
        match &self.feature_weights {
            None => Ok(alloc::vec![1.0; m]),
            Some(w) => {
                if w.len() != m || w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                    return Err(LloydError::BadFeatureWeights { expected: m });
                }
                Ok(w.clone())
            }
        }
    }
}

/// One centroid component per feature. Categorical components are sparse
/// maps over category tokens with the squared norm cached.
#[derive(Clone, Debug)]
pub enum CentroidComponent {
    Continuous(f64),
    Categorical {
        coords: BTreeMap<String, f64>,
        norm_sq: f64,
    },
}

/// A full mixed-type centroid.
#[derive(Clone, Debug)]
pub struct Centroid {
    pub components: Vec<CentroidComponent>,
}

impl Centroid {
    /// Resolves a grid point into an explicit (still sparse) centroid.
    pub fn from_grid_point(dims: &[SubspaceCentroids], coords: &[u32]) -> Centroid {
        let components = dims
            .iter()
            .zip(coords)
            .map(|(dim, &id)| match dim.component(id) {
                GridComponent::Continuous(x) => CentroidComponent::Continuous(x),
                GridComponent::Heavy(token) => {
                    let mut coords = BTreeMap::new();
                    coords.insert(String::from(token), 1.0);
                    CentroidComponent::Categorical {
                        coords,
                        norm_sq: 1.0,
                    }
                }
                GridComponent::Light { coords, norm_sq } => CentroidComponent::Categorical {
                    coords: coords.clone(),
                    norm_sq,
                },
            })
            .collect();
        Centroid { components }
    }
}

/// Squared distance between a grid-cell component and a centroid
/// component. Heavy components cost O(1); the light component costs its
/// support size thanks to the cached norms.
pub fn sparse_distance(grid: &GridComponent<'_>, centroid: &CentroidComponent) -> f64 {
    match (grid, centroid) {
        (GridComponent::Continuous(x), CentroidComponent::Continuous(c)) => {
            let d = x - c;
            d * d
        }
        (GridComponent::Heavy(token), CentroidComponent::Categorical { coords, norm_sq }) => {
            1.0 - 2.0 * coords.get(*token).copied().unwrap_or(0.0) + norm_sq
        }
        (
            GridComponent::Light {
                coords: g,
                norm_sq: g_norm,
            },
            CentroidComponent::Categorical {
                coords: c,
                norm_sq: c_norm,
            },
        ) => {
            let inner: f64 = g
                .iter()
                .map(|(t, gv)| gv * c.get(t).copied().unwrap_or(0.0))
                .sum();
            g_norm + c_norm - 2.0 * inner
        }
        _ => panic!("grid and centroid component kinds do not match"),
    }
}

/// The clustering produced by [`lloyd_iterate`].
#[derive(Clone, Debug)]
pub struct ClusteringResult {
    pub centroids: Vec<Centroid>,
    /// Per coreset point, the index of its nearest centroid.
    pub assignment: Vec<u32>,
    /// Weighted SSE of the coreset against `centroids` (raw integer
    /// weights).
    pub objective: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Assignment-step objectives, one per evaluation (non-increasing).
    pub objective_trace: Vec<f64>,
    /// Instrumented distance-term counts, one per evaluation pass.
    pub distance_terms_per_iter: Vec<u64>,
}

/// Per-(centroid, feature) distance table keyed by component id, plus the
/// number of scalar terms spent building it.
struct DistanceTables {
    /// `dist[c][j][id]`, already scaled by the feature weight.
    dist: Vec<Vec<Vec<f64>>>,
    terms: u64,
}

fn build_tables(
    dims: &[SubspaceCentroids],
    centroids: &[Centroid],
    lambda: &[f64],
) -> DistanceTables {
    let mut terms = 0u64;
    let dist = centroids
        .iter()
        .map(|centroid| {
            dims.iter()
                .enumerate()
                .map(|(j, dim)| {
                    (0..dim.count() as u32)
                        .map(|id| {
                            let grid = dim.component(id);
                            terms += match &grid {
                                GridComponent::Light { coords, .. } => 1 + coords.len() as u64,
                                _ => 1,
                            };
                            lambda[j] * sparse_distance(&grid, &centroid.components[j])
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    DistanceTables { dist, terms }
}

struct AssignmentPass {
    assignment: Vec<u32>,
    best_dist: Vec<f64>,
    objective: f64,
    terms: u64,
}

fn assign_points(coreset: &GridCoreset, tables: &DistanceTables) -> AssignmentPass {
    let k = tables.dist.len();
    let m = coreset.dim_count();
    let mut assignment = Vec::with_capacity(coreset.len());
    let mut best_dist = Vec::with_capacity(coreset.len());
    let mut objective = 0.0;
    let mut terms = 0u64;
    for point in &coreset.points {
        let mut best = f64::INFINITY;
        let mut best_c = 0u32;
        for (c, per_feature) in tables.dist.iter().enumerate() {
            let mut d = 0.0;
            for (j, table) in per_feature.iter().enumerate() {
                d += table[point.coords[j] as usize];
            }
            if d < best {
                best = d;
                best_c = c as u32;
            }
        }
        terms += (k * m) as u64;
        objective += point.weight as f64 * best;
        assignment.push(best_c);
        best_dist.push(best);
    }
    AssignmentPass {
        assignment,
        best_dist,
        objective,
        terms,
    }
}

/// Per-cluster, per-feature, per-component-id integer weight sums. Exact
/// u64 accumulation keeps the update step deterministic.
struct Accumulators {
    wsum: Vec<Vec<Vec<u64>>>,
    cluster_weight: Vec<u64>,
    terms: u64,
}

fn accumulate(coreset: &GridCoreset, k: usize, assignment: &[u32]) -> Accumulators {
    let m = coreset.dim_count();
    let mut wsum: Vec<Vec<Vec<u64>>> = (0..k)
        .map(|_| {
            coreset
                .dims
                .iter()
                .map(|d| alloc::vec![0u64; d.count()])
                .collect()
        })
        .collect();
    let mut cluster_weight = alloc::vec![0u64; k];
    let mut terms = 0u64;
    for (point, &c) in coreset.points.iter().zip(assignment) {
        let c = c as usize;
        for (j, &id) in point.coords.iter().enumerate() {
            wsum[c][j][id as usize] += point.weight;
        }
        cluster_weight[c] += point.weight;
        terms += m as u64;
    }
    Accumulators {
        wsum,
        cluster_weight,
        terms,
    }
}

/// Weighted means per cluster, expanded from the component weight sums.
fn update_centroids(
    coreset: &GridCoreset,
    acc: &Accumulators,
    previous: &[Centroid],
) -> (Vec<Centroid>, u64) {
    let mut terms = 0u64;
    let centroids = (0..acc.cluster_weight.len())
        .map(|c| {
            if acc.cluster_weight[c] == 0 {
                // Unrepairable empty cluster (k exceeds the coreset):
                // keep the previous centroid.
                return previous[c].clone();
            }
            let total = acc.cluster_weight[c] as f64;
            let components = coreset
                .dims
                .iter()
                .enumerate()
                .map(|(j, dim)| match dim {
                    SubspaceCentroids::Continuous(cont) => {
                        let mut mean = 0.0;
                        for (id, &w) in acc.wsum[c][j].iter().enumerate() {
                            if w > 0 {
                                mean += w as f64 / total * cont.centroids()[id];
                            }
                            terms += 1;
                        }
                        CentroidComponent::Continuous(mean)
                    }
                    SubspaceCentroids::Categorical(cat) => {
                        let mut coords: BTreeMap<String, f64> = BTreeMap::new();
                        for (id, &w) in acc.wsum[c][j].iter().enumerate() {
                            terms += 1;
                            if w == 0 {
                                continue;
                            }
                            let frac = w as f64 / total;
                            if id < cat.heavy().len() {
                                *coords.entry(cat.heavy()[id].clone()).or_insert(0.0) += frac;
                            } else {
                                for (token, mu) in cat.light_centroid() {
                                    *coords.entry(token.clone()).or_insert(0.0) += frac * mu;
                                    terms += 1;
                                }
                            }
                        }
                        let norm_sq = coords.values().map(|x| x * x).sum();
                        terms += coords.len() as u64;
                        CentroidComponent::Categorical { coords, norm_sq }
                    }
                })
                .collect();
            Centroid { components }
        })
        .collect();
    (centroids, terms)
}

/// Moves the highest weighted-distance point into each empty cluster so no
/// cluster goes empty while points remain; deterministic (ties take the
/// lowest point index).
fn repair_empty_clusters(coreset: &GridCoreset, pass: &mut AssignmentPass, k: usize) {
    let mut counts = alloc::vec![0usize; k];
    for &c in &pass.assignment {
        counts[c as usize] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, point) in coreset.points.iter().enumerate() {
            if counts[pass.assignment[i] as usize] <= 1 {
                continue;
            }
            let contribution = point.weight as f64 * pass.best_dist[i];
            if best.is_none_or(|(_, b)| contribution > b) {
                best = Some((i, contribution));
            }
        }
        let Some((i, contribution)) = best else {
            continue;
        };
        counts[pass.assignment[i] as usize] -= 1;
        counts[empty] += 1;
        pass.assignment[i] = empty as u32;
        // The point becomes its own centroid at the next update.
        pass.objective -= contribution;
        pass.best_dist[i] = 0.0;
    }
}

/// k-means++ seeding over the weighted coreset: the first center is drawn
/// proportionally to weight, each next proportionally to weight times the
/// squared distance to the nearest chosen center. Deterministic given the
/// seed.
pub fn seed_kmeans_pp(
    coreset: &GridCoreset,
    k: usize,
    seed: u64,
    config: &LloydConfig,
) -> Result<Vec<Centroid>, LloydError> {
    if k == 0 {
        return Err(LloydError::ZeroK);
    }
    if coreset.is_empty() {
        return Err(LloydError::EmptyCoreset);
    }
    if k > coreset.len() {
        return Err(LloydError::KTooLarge {
            k,
            points: coreset.len(),
        });
    }
    let lambda = config.resolve_weights(coreset.dim_count())?;

    // Pairwise component distances; grid cells only take kappa_j distinct
    // values per feature.
    let pair: Vec<Vec<Vec<f64>>> = coreset
        .dims
        .iter()
        .enumerate()
        .map(|(j, dim)| {
            let n = dim.count() as u32;
            (0..n)
                .map(|a| {
                    (0..n)
                        .map(|b| lambda[j] * dim.component_pair_distance(a, b))
                        .collect()
                })
                .collect()
        })
        .collect();
    let point_dist = |a: &[u32], b: &[u32]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&pair)
            .map(|((&x, &y), table)| table[x as usize][y as usize])
            .sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);

    let weights: Vec<f64> = coreset.points.iter().map(|p| p.weight as f64).collect();
    chosen.push(weighted_pick(&weights, next_unit(&mut rng)));

    let mut min_dist = alloc::vec![f64::INFINITY; coreset.len()];
    while chosen.len() < k {
        let latest = &coreset.points[*chosen.last().unwrap()].coords;
        for (i, point) in coreset.points.iter().enumerate() {
            let d = point_dist(&point.coords, latest);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
        let scores: Vec<f64> = weights.iter().zip(&min_dist).map(|(w, d)| w * d).collect();
        let total: f64 = scores.iter().sum();
        let next = if total > 0.0 {
            weighted_pick(&scores, next_unit(&mut rng))
        } else {
            // all remaining mass sits on already-chosen cells; take the
            // first unchosen point
            (0..coreset.len())
                .find(|i| !chosen.contains(i))
                .unwrap_or(0)
        };
        chosen.push(next);
    }

    Ok(chosen
        .into_iter()
        .map(|i| Centroid::from_grid_point(&coreset.dims, &coreset.points[i].coords))
        .collect())
}

/// Uniform draw in [0, 1) from the top 53 bits.
fn next_unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Index of the first cumulative weight exceeding `u * total`.
pub(crate) fn weighted_pick(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if target < cum {
            return i;
        }
    }
    weights.len() - 1
}

/// Alternates weighted nearest-centroid assignment and weighted-mean
/// updates until the relative objective decrease drops below `tol` or
/// `max_iter` passes are done. The returned assignment and objective are
/// consistent with the returned centroids.
pub fn lloyd_iterate(
    coreset: &GridCoreset,
    initial: Vec<Centroid>,
    config: &LloydConfig,
) -> Result<ClusteringResult, LloydError> {
    if initial.is_empty() {
        return Err(LloydError::ZeroK);
    }
    if coreset.is_empty() {
        return Err(LloydError::EmptyCoreset);
    }
    let lambda = config.resolve_weights(coreset.dim_count())?;
    let k = initial.len();

    let mut centroids = initial;
    let mut prev_objective: Option<f64> = None;
    let mut iterations = 0usize;
    let mut objective_trace = Vec::new();
    let mut distance_terms = Vec::new();

    loop {
        let tables = build_tables(&coreset.dims, &centroids, &lambda);
        let mut pass = assign_points(coreset, &tables);
        let mut terms = tables.terms + pass.terms;
        objective_trace.push(pass.objective);

        let converged =
            prev_objective.is_some_and(|prev| prev - pass.objective <= config.tol * prev.max(0.0));
        if iterations >= config.max_iter || converged {
            distance_terms.push(terms);
            return Ok(ClusteringResult {
                centroids,
                assignment: pass.assignment,
                objective: pass.objective,
                iterations,
                seed: 0,
                objective_trace,
                distance_terms_per_iter: distance_terms,
            });
        }

        repair_empty_clusters(coreset, &mut pass, k);
        let acc = accumulate(coreset, k, &pass.assignment);
        let (next, update_terms) = update_centroids(coreset, &acc, &centroids);
        terms += acc.terms + update_terms;
        distance_terms.push(terms);

        centroids = next;
        prev_objective = Some(pass.objective);
        iterations += 1;
    }
}

/// Seeds with k-means++ and runs Lloyd to convergence.
pub fn run_weighted_kmeans(
    coreset: &GridCoreset,
    k: usize,
    seed: u64,
    config: &LloydConfig,
) -> Result<ClusteringResult, LloydError> {
    let initial = seed_kmeans_pp(coreset, k, seed, config)?;
    let mut result = lloyd_iterate(coreset, initial, config)?;
    result.seed = seed;
    Ok(result)
}
