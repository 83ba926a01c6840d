//! Query/schema configuration: one JSON document describing the relations,
//! their CSV files, the feature columns, FD chains, and run parameters.
//! Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use relkm_core::{AttributeKind, AttributeRole, AttributeSpec, FdChain, FeatureRef, JoinQuery};

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindCfg {
    Continuous,
    Categorical,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleCfg {
    Feature,
    JoinKey,
    FeatureAndJoinKey,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct AttrCfg {
    pub name: String,
    pub kind: KindCfg,
    pub role: RoleCfg,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct RelationCfg {
    pub name: String,
    pub file: String,
    pub attributes: Vec<AttrCfg>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct FeatureCfg {
    pub relation: String,
    pub attribute: String,
}

/// The on-disk configuration document.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ConfigFile {
    pub relations: Vec<RelationCfg>,
    pub features: Vec<FeatureCfg>,
    #[serde(default)]
    pub fd_chains: Vec<Vec<String>>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub kappa: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Per-feature distance weights, keyed by attribute name.
    #[serde(default)]
    pub feature_weights: Option<BTreeMap<String, f64>>,
    /// Optional pre-rounding of continuous feature columns at load time.
    #[serde(default)]
    pub continuous_round_decimals: Option<u8>,
    #[serde(default)]
    pub materialize_cap: Option<u64>,
}

/// Flag overrides collected by the CLI.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub k: Option<usize>,
    pub kappa: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub threads: Option<usize>,
    pub materialize_cap: Option<u64>,
}

pub const DEFAULT_MATERIALIZE_CAP: u64 = 10_000_000;

/// A fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub file: ConfigFile,
    /// Directory CSV paths are resolved against (the config file's parent).
    pub base_dir: PathBuf,
    pub k: Option<usize>,
    pub kappa: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub threads: usize,
    pub materialize_cap: u64,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(path.display().to_string(), e))?;
        let file: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let config = RunConfig {
            k: overrides.k.or(file.k),
            kappa: overrides.kappa.or(file.kappa).or(overrides.k).or(file.k),
            seed: overrides.seed.or(file.seed).unwrap_or(0),
            max_iter: overrides.max_iter.or(file.max_iter).unwrap_or(100),
            tol: overrides.tol.or(file.tol).unwrap_or(1e-4),
            threads: overrides.threads.unwrap_or(1),
            materialize_cap: overrides
                .materialize_cap
                .or(file.materialize_cap)
                .unwrap_or(DEFAULT_MATERIALIZE_CAP),
            base_dir,
            file,
        };
        config.validate_structure()?;
        Ok(config)
    }

    fn validate_structure(&self) -> Result<(), CliError> {
        if self.file.relations.is_empty() {
            return Err(CliError::Config("no relations declared".into()));
        }
        if self.file.features.is_empty() {
            return Err(CliError::Config("no features declared".into()));
        }
        if self.tol < 0.0 || !self.tol.is_finite() {
            return Err(CliError::Config(
                "tol must be a nonnegative finite number".into(),
            ));
        }
        if self.threads == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if let Some(weights) = &self.file.feature_weights {
            for (name, w) in weights {
                if !self.file.features.iter().any(|f| f.attribute == *name) {
                    return Err(CliError::Config(format!(
                        "feature_weights names unknown feature `{name}`"
                    )));
                }
                if !w.is_finite() || *w <= 0.0 {
                    return Err(CliError::Config(format!(
                        "feature weight for `{name}` must be positive and finite"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Validates and returns (k, kappa) for the clustering pipeline:
    /// k >= 1, 2 <= kappa <= k.
    pub fn clustering_params(&self) -> Result<(usize, usize), CliError> {
        let k = self.k.ok_or_else(|| {
            CliError::Config("k is required (set it in the config file or pass --k)".into())
        })?;
        let kappa = self.kappa.unwrap_or(k);
        if k < 1 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if kappa > k {
            return Err(CliError::Config(format!(
                "kappa = {kappa} must not exceed k = {k}"
            )));
        }
        if kappa < 2 {
            return Err(CliError::Config(format!(
                "kappa = {kappa} is below the pipeline minimum of 2"
            )));
        }
        Ok((k, kappa))
    }

    /// kappa alone, for subcommands that stop at the coreset.
    pub fn kappa_param(&self) -> Result<usize, CliError> {
        let kappa = self.kappa.ok_or_else(|| {
            CliError::Config(
                "kappa is required (set kappa or k in the config, or pass flags)".into(),
            )
        })?;
        if kappa < 2 {
            return Err(CliError::Config(format!(
                "kappa = {kappa} is below the pipeline minimum of 2"
            )));
        }
        Ok(kappa)
    }

    pub fn attribute_specs(&self, rel: &RelationCfg) -> Vec<AttributeSpec> {
        rel.attributes
            .iter()
            .map(|a| {
                AttributeSpec::new(
                    a.name.clone(),
                    match a.kind {
                        KindCfg::Continuous => AttributeKind::Continuous,
                        KindCfg::Categorical => AttributeKind::Categorical,
                    },
                    match a.role {
                        RoleCfg::Feature => AttributeRole::Feature,
                        RoleCfg::JoinKey => AttributeRole::JoinKey,
                        RoleCfg::FeatureAndJoinKey => AttributeRole::FeatureAndJoinKey,
                    },
                )
            })
            .collect()
    }

    pub fn join_query(&self) -> JoinQuery {
        JoinQuery {
            relations: self.file.relations.iter().map(|r| r.name.clone()).collect(),
            features: self
                .file
                .features
                .iter()
                .map(|f| FeatureRef::new(f.relation.clone(), f.attribute.clone()))
                .collect(),
        }
    }

    pub fn fd_chains(&self) -> Vec<FdChain> {
        self.file
            .fd_chains
            .iter()
            .map(|c| FdChain {
                features: c.clone(),
            })
            .collect()
    }

    /// Per-feature distance weights in feature order, if configured.
    pub fn feature_weight_vec(&self) -> Option<Vec<f64>> {
        self.file.feature_weights.as_ref().map(|map| {
            self.file
                .features
                .iter()
                .map(|f| map.get(&f.attribute).copied().unwrap_or(1.0))
                .collect()
        })
    }

    /// The config echoed into reports, with resolved run parameters.
    pub fn echo(&self) -> serde_json::Value {
        let mut file = self.file.clone();
        file.k = self.k;
        file.kappa = self.kappa;
        file.seed = Some(self.seed);
        file.max_iter = Some(self.max_iter);
        file.tol = Some(self.tol);
        file.materialize_cap = Some(self.materialize_cap);
        serde_json::to_value(&file).expect("config serializes")
    }
}
