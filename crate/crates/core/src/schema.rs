//! Relation schemas, deduplicated weighted rows, and functional-dependency
//! chain validation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::value::Value;

/// Whether a column holds finite reals or opaque tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributeKind {
    Continuous,
    Categorical,
}

/// How a column participates in the query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributeRole {
    Feature,
    JoinKey,
    FeatureAndJoinKey,
}

/// Declared metadata for one column of a relation.
#[derive(Clone, Debug)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub role: AttributeRole,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, kind: AttributeKind, role: AttributeRole) -> Self {
        AttributeSpec {
            name: name.into(),
            kind,
            role,
        }
    }

    pub fn is_feature(&self) -> bool {
        matches!(
            self.role,
            AttributeRole::Feature | AttributeRole::FeatureAndJoinKey
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("relation `{relation}`: duplicate attribute `{attribute}`")]
    DuplicateAttribute { relation: String, attribute: String },
    #[error("relation `{relation}`: row {row} has {got} values, schema has {expected}")]
    RowArity {
        relation: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error(
        "relation `{relation}`: row {row}, column `{column}`: value does not match declared kind"
    )]
    KindMismatch {
        relation: String,
        row: usize,
        column: String,
    },
    #[error("fd chain mentions unknown or non-categorical feature `{feature}`")]
    BadFdFeature { feature: String },
    #[error("fd chains are not disjoint: `{feature}` appears twice")]
    OverlappingFdChains { feature: String },
}

/// A named relation with deduplicated rows and per-row multiplicities.
///
/// Immutable after construction; all invariants (arity, kind agreement,
/// multiplicities >= 1) are enforced by the constructors.
#[derive(Clone, Debug)]
pub struct Relation {
    name: String,
    attributes: Vec<AttributeSpec>,
    rows: Vec<Vec<Value>>,
    multiplicity: Vec<u64>,
}

impl Relation {
    /// Builds a relation from raw rows, collapsing exact duplicates into a
    /// single row with multiplicity equal to the duplicate count.
    pub fn from_rows(
        name: impl Into<String>,
        attributes: Vec<AttributeSpec>,
        raw_rows: Vec<Vec<Value>>,
    ) -> Result<Self, SchemaError> {
        let weighted = raw_rows.into_iter().map(|r| (r, 1)).collect();
        Self::from_weighted_rows(name, attributes, weighted)
    }

    /// Builds a relation from rows that already carry multiplicities,
    /// merging duplicates by summing their counts. Rows with multiplicity 0
    /// are dropped.
    pub fn from_weighted_rows(
        name: impl Into<String>,
        attributes: Vec<AttributeSpec>,
        rows: Vec<(Vec<Value>, u64)>,
    ) -> Result<Self, SchemaError> {
        let name = name.into();
        let mut seen = BTreeMap::new();
        for (i, attr) in attributes.iter().enumerate() {
            if seen.insert(attr.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateAttribute {
                    relation: name,
                    attribute: attr.name.clone(),
                });
            }
        }

        let mut dedup: BTreeMap<Vec<Value>, u64> = BTreeMap::new();
        for (idx, (row, mult)) in rows.into_iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(SchemaError::RowArity {
                    relation: name,
                    row: idx + 1,
                    expected: attributes.len(),
                    got: row.len(),
                });
            }
            for (attr, v) in attributes.iter().zip(&row) {
                let ok = match attr.kind {
                    AttributeKind::Continuous => matches!(v, Value::Num(_)),
                    AttributeKind::Categorical => matches!(v, Value::Str(_)),
                };
                if !ok {
                    return Err(SchemaError::KindMismatch {
                        relation: name,
                        row: idx + 1,
                        column: attr.name.clone(),
                    });
                }
            }
            if mult > 0 {
                *dedup.entry(row).or_insert(0) += mult;
            }
        }

        let mut out_rows = Vec::with_capacity(dedup.len());
        let mut multiplicity = Vec::with_capacity(dedup.len());
        for (row, m) in dedup {
            out_rows.push(row);
            multiplicity.push(m);
        }
        Ok(Relation {
            name,
            attributes,
            rows: out_rows,
            multiplicity,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn attribute_index(&self, attribute: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == attribute)
    }

    /// Deduplicated rows, in sorted order.
    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    /// Per-row multiplicities, parallel to [`Relation::rows`].
    pub fn multiplicity(&self) -> &[u64] {
        &self.multiplicity
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Sum of multiplicities, i.e. the raw row count before dedup.
    pub fn total_multiplicity(&self) -> u64 {
        self.multiplicity.iter().sum()
    }

    /// Retains only the rows at the given (sorted, deduplicated) indices.
    pub(crate) fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Relation {
        let mut rows = Vec::new();
        let mut multiplicity = Vec::new();
        for i in 0..self.rows.len() {
            if keep(i) {
                rows.push(self.rows[i].clone());
                multiplicity.push(self.multiplicity[i]);
            }
        }
        Relation {
            name: self.name.clone(),
            attributes: self.attributes.clone(),
            rows,
            multiplicity,
        }
    }
}

/// A declared chain of categorical features where each one functionally
/// determines the next.
#[derive(Clone, Debug)]
pub struct FdChain {
    pub features: Vec<String>,
}

/// Outcome of checking one consecutive pair of an FD chain.
#[derive(Clone, Debug, PartialEq)]
pub enum FdStatus {
    Holds,
    /// `witness` maps to more than one right-hand value.
    Violated {
        witness: Value,
        seen: Vec<Value>,
    },
    /// No relation contains both attributes, so the pair cannot be checked
    /// against a single table.
    NotColocated,
}

#[derive(Clone, Debug)]
pub struct FdPairCheck {
    pub from: String,
    pub to: String,
    pub status: FdStatus,
}

#[derive(Clone, Debug, Default)]
pub struct FdReport {
    pub checks: Vec<FdPairCheck>,
}

impl FdReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.status == FdStatus::Holds)
    }

    pub fn violations(&self) -> impl Iterator<Item = &FdPairCheck> {
        self.checks
            .iter()
            .filter(|c| !matches!(c.status, FdStatus::Holds))
    }
}

/// Structural validation of FD chain declarations: features must exist,
/// be categorical, and chains must be disjoint.
pub fn validate_fd_decls(chains: &[FdChain], relations: &[Relation]) -> Result<(), SchemaError> {
    let mut seen = BTreeMap::new();
    for chain in chains {
        for feature in &chain.features {
            if seen.insert(feature.clone(), ()).is_some() {
                return Err(SchemaError::OverlappingFdChains {
                    feature: feature.clone(),
                });
            }
            let categorical = relations.iter().any(|r| {
                r.attributes()
                    .iter()
                    .any(|a| a.name == *feature && a.kind == AttributeKind::Categorical)
            });
            if !categorical {
                return Err(SchemaError::BadFdFeature {
                    feature: feature.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Checks each consecutive pair of every chain against the data. Violations
/// are report entries, not errors.
pub fn validate_fds(chains: &[FdChain], relations: &[Relation]) -> FdReport {
    let mut report = FdReport::default();
    for chain in chains {
        for pair in chain.features.windows(2) {
            let (from, to) = (&pair[0], &pair[1]);
            report.checks.push(FdPairCheck {
                from: from.clone(),
                to: to.clone(),
                status: check_pair(from, to, relations),
            });
        }
    }
    report
}

fn check_pair(from: &str, to: &str, relations: &[Relation]) -> FdStatus {
    let mut colocated = false;
    for rel in relations {
        let (Some(fi), Some(ti)) = (rel.attribute_index(from), rel.attribute_index(to)) else {
            continue;
        };
        colocated = true;
        let mut map: BTreeMap<&Value, &Value> = BTreeMap::new();
        for row in rel.rows() {
            match map.insert(&row[fi], &row[ti]) {
                Some(prev) if prev != &row[ti] => {
                    return FdStatus::Violated {
                        witness: row[fi].clone(),
                        seen: alloc::vec![prev.clone(), row[ti].clone()],
                    };
                }
                _ => {}
            }
        }
    }
    if colocated {
        FdStatus::Holds
    } else {
        FdStatus::NotColocated
    }
}
