//! Optimal per-feature weighted k-means.
//!
//! Continuous features use the exact O(n^2 k) dynamic program over sorted
//! distinct values with prefix-sum cost queries. Categorical features use
//! the closed form: the kappa-1 heaviest categories become singleton
//! clusters and the rest merge into one light cluster whose centroid is
//! the weight-normalized coordinate vector over the light categories.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::marginal::MarginalTable;
use crate::value::Value;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("feature `{0}`: marginal table is empty")]
    EmptyMarginal(String),
    #[error("kappa must be at least 1")]
    ZeroKappa,
    #[error("feature `{0}`: expected continuous values")]
    NonNumericValue(String),
    #[error("feature `{0}`: expected categorical values")]
    NonCategoricalValue(String),
    #[error("partition does not cover the weight map exactly (category `{0}`)")]
    PartitionNotCovering(String),
}

/// Optimal clustering of one continuous feature: strictly increasing
/// centroids with the interval (nearest-centroid) assignment.
#[derive(Clone, Debug)]
pub struct ContinuousCentroids {
    feature: String,
    centroids: Vec<f64>,
    /// Midpoints between consecutive centroids; `quantize` is a binary
    /// search over them with midpoint ties taking the lower index.
    boundaries: Vec<f64>,
    cost: f64,
}

impl ContinuousCentroids {
    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn count(&self) -> usize {
        self.centroids.len()
    }

    /// Weighted SSE of the marginal against the centroids.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Nearest-centroid index; exact midpoints go to the lower index.
    pub fn quantize(&self, x: f64) -> u32 {
        self.boundaries.partition_point(|b| *b < x) as u32
    }
}

/// Optimal clustering of one categorical feature in its one-hot subspace.
#[derive(Clone, Debug)]
pub struct CategoricalCentroids {
    feature: String,
    /// Heaviest categories, descending by weight (ties by token order);
    /// each is a singleton cluster.
    heavy: Vec<String>,
    /// Light-cluster centroid: token -> coordinate, nonzero entries only.
    /// Coordinates sum to 1. Empty when every category is heavy.
    light_centroid: BTreeMap<String, f64>,
    light_norm_sq: f64,
    cost: f64,
    total_weight: u64,
    assign: BTreeMap<String, u32>,
}

impl CategoricalCentroids {
    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn heavy(&self) -> &[String] {
        &self.heavy
    }

    pub fn light_centroid(&self) -> &BTreeMap<String, f64> {
        &self.light_centroid
    }

    pub fn light_norm_sq(&self) -> f64 {
        self.light_norm_sq
    }

    pub fn has_light(&self) -> bool {
        !self.light_centroid.is_empty()
    }

    /// Number of centroids: heavy singletons plus the light cluster.
    pub fn count(&self) -> usize {
        self.heavy.len() + usize::from(self.has_light())
    }

    /// Weighted one-hot SSE on the raw integer weights.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Cost under weights normalized to sum to one.
    pub fn cost_normalized(&self) -> f64 {
        if self.total_weight == 0 {
            0.0
        } else {
            self.cost / self.total_weight as f64
        }
    }

    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    /// Number of categories in the marginal this was solved from (the
    /// one-hot width of the feature).
    pub fn domain_size(&self) -> usize {
        self.assign.len()
    }

    /// Centroid id for a token: heavy tokens map to their own singleton,
    /// everything else (including unseen tokens) to the light cluster when
    /// it exists. An unseen token with no light cluster is equidistant to
    /// all heavy singletons and takes index 0.
    pub fn quantize(&self, token: &str) -> u32 {
        match self.assign.get(token) {
            Some(&id) => id,
            None if self.has_light() => self.heavy.len() as u32,
            None => 0,
        }
    }
}

/// Per-feature centroid set of either kind.
#[derive(Clone, Debug)]
pub enum SubspaceCentroids {
    Continuous(ContinuousCentroids),
    Categorical(CategoricalCentroids),
}

/// One resolved grid-cell component. Categorical components stay sparse:
/// a heavy component is an indicator vector identified by its token, the
/// light component borrows the solver's normalized coordinate map.
#[derive(Clone, Debug)]
pub enum GridComponent<'a> {
    Continuous(f64),
    Heavy(&'a str),
    Light {
        coords: &'a BTreeMap<String, f64>,
        norm_sq: f64,
    },
}

impl SubspaceCentroids {
    pub fn feature(&self) -> &str {
        match self {
            SubspaceCentroids::Continuous(c) => c.feature(),
            SubspaceCentroids::Categorical(c) => c.feature(),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            SubspaceCentroids::Continuous(c) => c.count(),
            SubspaceCentroids::Categorical(c) => c.count(),
        }
    }

    pub fn cost(&self) -> f64 {
        match self {
            SubspaceCentroids::Continuous(c) => c.cost(),
            SubspaceCentroids::Categorical(c) => c.cost(),
        }
    }

    pub fn quantize(&self, v: &Value) -> u32 {
        match (self, v) {
            (SubspaceCentroids::Continuous(c), Value::Num(x)) => c.quantize(x.get()),
            (SubspaceCentroids::Categorical(c), Value::Str(s)) => c.quantize(s),
            _ => panic!("value kind does not match subspace kind"),
        }
    }

    /// Resolves a centroid id to its component representation.
    pub fn component(&self, id: u32) -> GridComponent<'_> {
        let id = id as usize;
        match self {
            SubspaceCentroids::Continuous(c) => GridComponent::Continuous(c.centroids()[id]),
            SubspaceCentroids::Categorical(c) => {
                if id < c.heavy.len() {
                    GridComponent::Heavy(&c.heavy[id])
                } else {
                    debug_assert!(id == c.heavy.len() && c.has_light());
                    GridComponent::Light {
                        coords: &c.light_centroid,
                        norm_sq: c.light_norm_sq,
                    }
                }
            }
        }
    }

    /// Squared distance between two centroid ids of this subspace. Heavy
    /// components never overlap the light centroid's support, so every
    /// case is closed form.
    pub fn component_pair_distance(&self, a: u32, b: u32) -> f64 {
        if a == b {
            return 0.0;
        }
        match self {
            SubspaceCentroids::Continuous(c) => {
                let d = c.centroids()[a as usize] - c.centroids()[b as usize];
                d * d
            }
            SubspaceCentroids::Categorical(c) => {
                let light = c.heavy.len() as u32;
                if a == light || b == light {
                    1.0 + c.light_norm_sq
                } else {
                    2.0
                }
            }
        }
    }
}

/// Exact 1-D weighted k-means over the distinct values of a marginal.
///
/// If the number of distinct values is at most `kappa`, every value is its
/// own centroid and the cost is zero.
pub fn solve_continuous_1d(
    marginal: &MarginalTable,
    kappa: usize,
) -> Result<ContinuousCentroids, SolverError> {
    if kappa == 0 {
        return Err(SolverError::ZeroKappa);
    }
    if marginal.entries.is_empty() {
        return Err(SolverError::EmptyMarginal(marginal.feature.clone()));
    }
    let mut values = Vec::with_capacity(marginal.entries.len());
    let mut weights = Vec::with_capacity(marginal.entries.len());
    for (v, &w) in &marginal.entries {
        let x = v
            .as_num()
            .ok_or_else(|| SolverError::NonNumericValue(marginal.feature.clone()))?;
        values.push(x);
        weights.push(w as f64);
    }

    let centroids = if values.len() <= kappa {
        values.clone()
    } else {
        dp_centroids(&values, &weights, kappa)
    };
    debug_assert!(
        centroids.windows(2).all(|p| p[0] < p[1]),
        "centroids strictly increase"
    );

    let boundaries: Vec<f64> = centroids
        .windows(2)
        .map(|pair| 0.5 * (pair[0] + pair[1]))
        .collect();
    // Cost under the nearest-centroid rule, which up to exact-midpoint ties
    // (equal either way) matches the optimal partition cost.
    let mut cost = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let id = boundaries.partition_point(|b| *b < x);
        let d = x - centroids[id];
        cost += weights[i] * d * d;
    }

    Ok(ContinuousCentroids {
        feature: marginal.feature.clone(),
        centroids,
        boundaries,
        cost,
    })
}

/// O(n^2 k) dynamic program over sorted values. Values are shifted by the
/// global weighted mean before the prefix sums are built to limit
/// cancellation; the optimal partition is shift-invariant.
fn dp_centroids(values: &[f64], weights: &[f64], kappa: usize) -> Vec<f64> {
    let n = values.len();
    let total_w: f64 = weights.iter().sum();
    let shift = values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total_w;
    let shifted: Vec<f64> = values.iter().map(|x| x - shift).collect();

    let mut pw = alloc::vec![0.0f64; n + 1];
    let mut pwx = alloc::vec![0.0f64; n + 1];
    let mut pwx2 = alloc::vec![0.0f64; n + 1];
    for i in 0..n {
        pw[i + 1] = pw[i] + weights[i];
        pwx[i + 1] = pwx[i] + weights[i] * shifted[i];
        pwx2[i + 1] = pwx2[i] + weights[i] * shifted[i] * shifted[i];
    }
    // Weighted SSE of the segment [i, j] around its weighted mean.
    let seg_cost = |i: usize, j: usize| -> f64 {
        let w = pw[j + 1] - pw[i];
        let wx = pwx[j + 1] - pwx[i];
        let wx2 = pwx2[j + 1] - pwx2[i];
        (wx2 - wx * wx / w).max(0.0)
    };

    // cost[c][j]: best cost of clustering values[0..=j] into c+1 clusters.
    let mut cost = alloc::vec![alloc::vec![0.0f64; n]; kappa];
    let mut split = alloc::vec![alloc::vec![0usize; n]; kappa];
    for (j, slot) in cost[0].iter_mut().enumerate() {
        *slot = seg_cost(0, j);
    }
    for c in 1..kappa {
        for j in 0..n {
            if j < c {
                cost[c][j] = 0.0;
                split[c][j] = j;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut best_t = c;
            // last cluster is values[t..=j]
            for t in c..=j {
                let candidate = cost[c - 1][t - 1] + seg_cost(t, j);
                if candidate < best {
                    best = candidate;
                    best_t = t;
                }
            }
            cost[c][j] = best;
            split[c][j] = best_t;
        }
    }

    // Backtrack segment boundaries and emit weighted means (unshifted).
    let mut bounds = Vec::with_capacity(kappa);
    let mut j = n - 1;
    let mut c = kappa - 1;
    loop {
        let start = if c == 0 { 0 } else { split[c][j] };
        bounds.push((start, j));
        if c == 0 {
            break;
        }
        j = start - 1;
        c -= 1;
    }
    bounds.reverse();
    bounds
        .into_iter()
        .map(|(i, j)| {
            let w = pw[j + 1] - pw[i];
            let wx = pwx[j + 1] - pwx[i];
            wx / w + shift
        })
        .collect()
}

/// Closed-form optimal weighted k-means of a categorical feature.
///
/// Heavy ties at the boundary are broken by ascending token order, which
/// leaves the objective unchanged.
pub fn solve_categorical(
    marginal: &MarginalTable,
    kappa: usize,
) -> Result<CategoricalCentroids, SolverError> {
    if kappa == 0 {
        return Err(SolverError::ZeroKappa);
    }
    if marginal.entries.is_empty() {
        return Err(SolverError::EmptyMarginal(marginal.feature.clone()));
    }
    let mut cats: Vec<(&str, u64)> = Vec::with_capacity(marginal.entries.len());
    for (v, &w) in &marginal.entries {
        let token = v
            .as_str()
            .ok_or_else(|| SolverError::NonCategoricalValue(marginal.feature.clone()))?;
        cats.push((token, w));
    }
    cats.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let total_weight: u64 = cats.iter().map(|c| c.1).sum();
    let heavy_count = if cats.len() <= kappa {
        cats.len()
    } else {
        kappa - 1
    };
    let heavy: Vec<String> = cats[..heavy_count]
        .iter()
        .map(|(t, _)| String::from(*t))
        .collect();
    let light = &cats[heavy_count..];

    let mut light_centroid = BTreeMap::new();
    let mut light_norm_sq = 0.0;
    let mut cost = 0.0;
    if !light.is_empty() {
        let light_l1: u64 = light.iter().map(|c| c.1).sum();
        let light_l1_f = light_l1 as f64;
        let mut light_l2_sq = 0.0;
        for (token, w) in light {
            let coord = *w as f64 / light_l1_f;
            light_centroid.insert(String::from(*token), coord);
            light_norm_sq += coord * coord;
            light_l2_sq += (*w as f64) * (*w as f64);
        }
        // ||v_F||_1 - ||v_F||_2^2 / ||v_F||_1 for the light cluster; heavy
        // singletons contribute zero.
        cost = light_l1_f - light_l2_sq / light_l1_f;
    }

    let mut assign = BTreeMap::new();
    for (id, token) in heavy.iter().enumerate() {
        assign.insert(token.clone(), id as u32);
    }
    for (token, _) in light {
        assign.insert(String::from(*token), heavy.len() as u32);
    }

    Ok(CategoricalCentroids {
        feature: marginal.feature.clone(),
        heavy,
        light_centroid,
        light_norm_sq,
        cost,
        total_weight,
        assign,
    })
}

/// Evaluates the categorical clustering objective
/// `||v||_1 - sum_F ||v_F||_2^2 / ||v_F||_1` for an arbitrary partition of
/// the categories. Used as the oracle comparator for the closed form.
pub fn categorical_objective(
    weights: &BTreeMap<String, f64>,
    partition: &[Vec<String>],
) -> Result<f64, SolverError> {
    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
    for part in partition {
        for token in part {
            if !weights.contains_key(token) || seen.insert(token, ()).is_some() {
                return Err(SolverError::PartitionNotCovering(token.clone()));
            }
        }
    }
    if seen.len() != weights.len() {
        let missing = weights
            .keys()
            .find(|t| !seen.contains_key(t.as_str()))
            .unwrap();
        return Err(SolverError::PartitionNotCovering(missing.clone()));
    }

    let l1: f64 = weights.values().sum();
    let mut gain = 0.0;
    for part in partition {
        if part.is_empty() {
            continue;
        }
        let part_l1: f64 = part.iter().map(|t| weights[t]).sum();
        let part_l2_sq: f64 = part.iter().map(|t| weights[t] * weights[t]).sum();
        gain += part_l2_sq / part_l1;
    }
    Ok(l1 - gain)
}

/// Solves one feature with the solver matching the marginal's value kind.
pub fn solve_subspace(
    marginal: &MarginalTable,
    kind: crate::schema::AttributeKind,
    kappa: usize,
) -> Result<SubspaceCentroids, SolverError> {
    match kind {
        crate::schema::AttributeKind::Continuous => {
            solve_continuous_1d(marginal, kappa).map(SubspaceCentroids::Continuous)
        }
        crate::schema::AttributeKind::Categorical => {
            solve_categorical(marginal, kappa).map(SubspaceCentroids::Categorical)
        }
    }
}
