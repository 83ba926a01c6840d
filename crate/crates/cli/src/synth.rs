//! Synthetic star-schema generator: a sparse fact table of (product,
//! store) pairs joined with two dimension tables that carry several rows
//! per key, so the join result is much larger than the input relations.
//! Feature values are planted around well-separated cluster centers, and
//! optional FD chains are planted on the first dimension table.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub keys_p: usize,
    pub keys_s: usize,
    /// Fraction of the keys_p x keys_s pair grid present in the fact table.
    pub sparsity: f64,
    /// Rows per product key in the first dimension table.
    pub reps_p: usize,
    /// Rows per store key in the second dimension table.
    pub reps_s: usize,
    /// Planted cluster count per continuous feature.
    pub clusters: usize,
    /// Distance between adjacent planted centers.
    pub spread: f64,
    /// Uniform jitter half-width around each center.
    pub jitter: f64,
    /// Lengths of FD chains planted as categorical features on dim_p.
    pub fd_chain_lengths: Vec<usize>,
    /// Category count of the first chain level; halves per level (min 2).
    pub fd_base_cardinality: usize,
    /// Decimal places for continuous features.
    pub round_decimals: u8,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            keys_p: 100,
            keys_s: 100,
            sparsity: 0.1,
            reps_p: 1,
            reps_s: 1,
            clusters: 5,
            spread: 50.0,
            jitter: 2.0,
            fd_chain_lengths: Vec::new(),
            fd_base_cardinality: 32,
            round_decimals: 2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(format!("synth: {msg}")));
        if self.keys_p == 0 || self.keys_s == 0 {
            return bad("key cardinalities must be positive");
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad("sparsity must be in (0, 1]");
        }
        if self.reps_p == 0 || self.reps_s == 0 {
            return bad("reps must be at least 1");
        }
        if self.clusters == 0 {
            return bad("clusters must be at least 1");
        }
        if self.spread <= 0.0 || self.jitter < 0.0 {
            return bad("spread must be positive and jitter nonnegative");
        }
        if self.fd_chain_lengths.contains(&0) {
            return bad("fd chain lengths must be at least 1");
        }
        if !self.fd_chain_lengths.is_empty() && self.fd_base_cardinality < 2 {
            return bad("fd base cardinality must be at least 2");
        }
        Ok(())
    }

    pub fn fact_rows(&self) -> usize {
        (((self.keys_p * self.keys_s) as f64 * self.sparsity).round() as usize).max(1)
    }

    pub fn expected_join_rows(&self) -> u64 {
        self.fact_rows() as u64 * self.reps_p as u64 * self.reps_s as u64
    }
}

pub struct SynthSummary {
    pub config_path: PathBuf,
    pub fact_rows: usize,
    pub expected_join_rows: u64,
    pub total_input_rows: u64,
}

fn chain_feature_names(spec: &SynthSpec) -> Vec<Vec<String>> {
    spec.fd_chain_lengths
        .iter()
        .enumerate()
        .map(|(ci, &len)| (0..len).map(|l| format!("chain{ci}_l{l}")).collect())
        .collect()
}

/// Writes fact.csv, dim_p.csv, dim_s.csv, and config.json into `out_dir`.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<SynthSummary, CliError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir.display().to_string(), e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chains = chain_feature_names(spec);

    let center = |key: usize| (key % spec.clusters) as f64 * spec.spread;
    let prec = spec.round_decimals as usize;

    // fact.csv: distinct (pid, sid) pairs sampled from the grid.
    let fact_rows = spec.fact_rows();
    let fact_path = out_dir.join("fact.csv");
    {
        let mut w = csv_writer(&fact_path)?;
        write_line(&mut w, &fact_path, "pid,sid")?;
        let grid = spec.keys_p * spec.keys_s;
        let picks = rand::seq::index::sample(&mut rng, grid, fact_rows);
        let mut sorted: Vec<usize> = picks.into_iter().collect();
        sorted.sort_unstable();
        for cell in sorted {
            let (p, s) = (cell / spec.keys_s, cell % spec.keys_s);
            write_line(&mut w, &fact_path, &format!("p{p},s{s}"))?;
        }
        w.flush()
            .map_err(|e| CliError::io(fact_path.display().to_string(), e))?;
    }

    // dim_p.csv: reps_p feature rows per product key, plus FD chains.
    let dim_p_path = out_dir.join("dim_p.csv");
    {
        let mut w = csv_writer(&dim_p_path)?;
        let mut header = String::from("pid,xp");
        for chain in &chains {
            for name in chain {
                header.push(',');
                header.push_str(name);
            }
        }
        write_line(&mut w, &dim_p_path, &header)?;
        for p in 0..spec.keys_p {
            for rep in 0..spec.reps_p {
                let x = center(p) + rng.random_range(-spec.jitter..=spec.jitter);
                let mut line = format!("p{p},{x:.prec$}");
                for (ci, chain) in chains.iter().enumerate() {
                    let g = (p * spec.reps_p + rep + ci) % spec.fd_base_cardinality;
                    // level l groups pairs of level l-1 ids, so each level
                    // functionally determines the next
                    for level in 0..chain.len() {
                        let id = g >> level;
                        line.push_str(&format!(",c{ci}v{level}_{id}"));
                    }
                }
                write_line(&mut w, &dim_p_path, &line)?;
            }
        }
        w.flush()
            .map_err(|e| CliError::io(dim_p_path.display().to_string(), e))?;
    }

    // dim_s.csv: reps_s feature rows per store key.
    let dim_s_path = out_dir.join("dim_s.csv");
    {
        let mut w = csv_writer(&dim_s_path)?;
        write_line(&mut w, &dim_s_path, "sid,xs")?;
        for s in 0..spec.keys_s {
            for _ in 0..spec.reps_s {
                let x = center(s) + rng.random_range(-spec.jitter..=spec.jitter);
                write_line(&mut w, &dim_s_path, &format!("s{s},{x:.prec$}"))?;
            }
        }
        w.flush()
            .map_err(|e| CliError::io(dim_s_path.display().to_string(), e))?;
    }

    // config.json
    let mut dim_p_attrs = vec![
        json!({"name": "pid", "kind": "categorical", "role": "join_key"}),
        json!({"name": "xp", "kind": "continuous", "role": "feature"}),
    ];
    let mut features = vec![
        json!({"relation": "dim_p", "attribute": "xp"}),
        json!({"relation": "dim_s", "attribute": "xs"}),
    ];
    for chain in &chains {
        for name in chain {
            dim_p_attrs.push(json!({"name": name, "kind": "categorical", "role": "feature"}));
            features.push(json!({"relation": "dim_p", "attribute": name}));
        }
    }
    let config = json!({
        "relations": [
            {"name": "fact", "file": "fact.csv", "attributes": [
                {"name": "pid", "kind": "categorical", "role": "join_key"},
                {"name": "sid", "kind": "categorical", "role": "join_key"},
            ]},
            {"name": "dim_p", "file": "dim_p.csv", "attributes": dim_p_attrs},
            {"name": "dim_s", "file": "dim_s.csv", "attributes": [
                {"name": "sid", "kind": "categorical", "role": "join_key"},
                {"name": "xs", "kind": "continuous", "role": "feature"},
            ]},
        ],
        "features": features,
        "fd_chains": chains,
        "seed": spec.seed,
    });
    let config_path = out_dir.join("config.json");
    crate::output::write_json(&config_path, &config)?;

    Ok(SynthSummary {
        config_path,
        fact_rows,
        expected_join_rows: spec.expected_join_rows(),
        total_input_rows: fact_rows as u64
            + (spec.keys_p * spec.reps_p) as u64
            + (spec.keys_s * spec.reps_s) as u64,
    })
}

fn csv_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(std::io::BufWriter::new(f))
}

fn write_line(w: &mut impl Write, path: &Path, line: &str) -> Result<(), CliError> {
    writeln!(w, "{line}").map_err(|e| CliError::io(path.display().to_string(), e))
}
