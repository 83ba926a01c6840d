//! Relational k-means over acyclic natural joins.
//!
//! Clusters the result of a feature-extraction join query without ever
//! materializing it: per-feature marginal weights are aggregated directly
//! from the base relations by count propagation over a join tree, each
//! feature is clustered optimally on its own (dynamic programming for
//! continuous features, a closed form for categorical ones), and the
//! resulting per-feature centroids span a weighted grid coreset on which
//! weighted k-means runs with sparse categorical distances.
//!
//! The crate is `no_std` (alloc required). IO, file formats, and the CLI
//! live in the companion `relkm-cli` crate.
//!
//! Modules follow the pipeline:
//! - [`schema`] / [`query`]: relations, natural-join queries, join trees.
//! - [`marginal`]: join cardinality and per-feature marginal weights.
//! - [`solvers`]: optimal one-dimensional weighted k-means per feature.
//! - [`coreset`]: the weighted grid coreset.
//! - [`lloyd`]: k-means++ seeding and weighted Lloyd on the coreset.
//! - [`oracle`]: materialization, brute force, and objective evaluation
//!   for desk-scale verification.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod aggregate;
pub mod coreset;
pub mod lloyd;
pub mod marginal;
pub mod oracle;
pub mod query;
pub mod schema;
pub mod solvers;
pub mod value;

pub use aggregate::AggregateError;
pub use coreset::{FdBoundReport, GridCoreset, GridPoint, QuantizedTree};
pub use lloyd::{Centroid, CentroidComponent, ClusteringResult, LloydConfig, LloydError};
pub use marginal::MarginalTable;
pub use oracle::{DataMatrix, OracleError};
pub use query::{FeatureRef, JoinQuery, JoinTree, QueryError};
pub use schema::{
    AttributeKind, AttributeRole, AttributeSpec, FdChain, FdReport, Relation, SchemaError,
};
pub use solvers::{CategoricalCentroids, ContinuousCentroids, SolverError, SubspaceCentroids};
pub use value::{FiniteF64, Value};
