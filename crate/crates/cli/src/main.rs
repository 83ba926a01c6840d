use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relkm_cli::bench::{render_bench, run_bench};
use relkm_cli::config::{Overrides, RunConfig};
use relkm_cli::error::CliError;
use relkm_cli::output;
use relkm_cli::pipeline::{render_report, run_pipeline};
use relkm_cli::synth::{SynthSpec, generate};

use relkm_core::marginal::compute_marginals;
use relkm_core::oracle::materialize_join;
use relkm_core::query::build_join_tree;
use relkm_core::schema::{FdStatus, validate_fds};

/// Relational k-means: cluster an acyclic join result without
/// materializing it, via a weighted grid coreset built from the base
/// relations.
#[derive(Parser)]
#[command(name = "relkm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write centroids plus a run report.
    Cluster(ClusterArgs),
    /// Compare the pipeline against materialize-then-cluster.
    Bench(BenchArgs),
    /// Materialize the grid coreset or the full data matrix to CSV.
    Materialize(MaterializeArgs),
    /// Check the query and FD declarations; dump per-feature marginals.
    Validate(ValidateArgs),
    /// Generate a synthetic star-schema dataset with planted structure.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON query/schema config.
    #[arg(long)]
    config: PathBuf,
    /// Number of clusters (overrides the config value).
    #[arg(long)]
    k: Option<usize>,
    /// Per-feature centroid count, 2 <= kappa <= k (defaults to k).
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Worker count for the per-feature solves.
    #[arg(long)]
    threads: Option<usize>,
    /// Materialization row cap for oracle paths.
    #[arg(long)]
    cap: Option<u64>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            k: self.k,
            kappa: self.kappa,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            threads: self.threads,
            materialize_cap: self.cap,
        };
        RunConfig::load(&self.config, &overrides)
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory for centroids.csv and report.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also run the materialize-then-cluster baseline.
    #[arg(long)]
    baseline: bool,
    /// Directory for bench_report.json, centroids.csv, and baseline scratch.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MaterializeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dump the grid coreset (centroid ids per feature + weight).
    #[arg(long, conflicts_with = "matrix")]
    coreset: bool,
    /// Dump the full data matrix (feature values + weight).
    #[arg(long)]
    matrix: bool,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the marginals CSV here instead of stdout.
    #[arg(long)]
    marginals_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the CSV files and config.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    keys_p: usize,
    #[arg(long, default_value_t = 100)]
    keys_s: usize,
    /// Fraction of the product-store grid present in the fact table.
    #[arg(long, default_value_t = 0.1)]
    sparsity: f64,
    /// Rows per product key in dim_p.
    #[arg(long, default_value_t = 1)]
    reps_p: usize,
    /// Rows per store key in dim_s.
    #[arg(long, default_value_t = 1)]
    reps_s: usize,
    /// Planted cluster count per continuous feature.
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 50.0)]
    spread: f64,
    #[arg(long, default_value_t = 2.0)]
    jitter: f64,
    /// Lengths of planted FD chains (repeat the flag per chain).
    #[arg(long = "fd-chain")]
    fd_chain: Vec<usize>,
    /// Category count of the first chain level.
    #[arg(long, default_value_t = 32)]
    fd_base: usize,
    #[arg(long, default_value_t = 2)]
    round_decimals: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cluster(args) => cluster(args),
        Command::Bench(args) => bench(args),
        Command::Materialize(args) => materialize(args),
        Command::Validate(args) => validate(args),
        Command::Synth(args) => synth(args),
    }
}

fn report_fd_issues(report: &relkm_core::FdReport) {
    for check in report.violations() {
        match &check.status {
            FdStatus::Violated { witness, seen } => eprintln!(
                "warning: declared FD {} -> {} does not hold: `{witness}` maps to {seen:?}",
                check.from, check.to
            ),
            FdStatus::NotColocated => eprintln!(
                "warning: FD {} -> {} spans relations and cannot be checked on a single table",
                check.from, check.to
            ),
            FdStatus::Holds => {}
        }
    }
}

fn cluster(args: ClusterArgs) -> Result<(), CliError> {
    let config = args.common.load()?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(args.out_dir.display().to_string(), e))?;
    let out = run_pipeline(&config)?;
    report_fd_issues(&out.fd_report);
    if let Some(bound) = &out.fd_bound {
        println!(
            "fd bound: {} nonzero cells <= {} (naive {})",
            bound.points, bound.chain_bound, bound.naive_bound
        );
        if !bound.holds {
            eprintln!("warning: coreset size exceeds the declared FD bound; check declarations");
        }
    }
    let centroids_path = args.out_dir.join("centroids.csv");
    output::write_centroids_csv(
        &centroids_path,
        &out.feature_names,
        &out.clustering.centroids,
    )?;
    let report_path = args.out_dir.join("report.json");
    output::write_json(&report_path, &out.report)?;
    print!("{}", render_report(&out.report));
    println!("centroids -> {}", centroids_path.display());
    println!("report    -> {}", report_path.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), CliError> {
    let config = args.common.load()?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(args.out_dir.display().to_string(), e))?;
    let out = run_bench(&config, args.baseline, &args.out_dir)?;
    report_fd_issues(&out.pipeline.fd_report);
    output::write_centroids_csv(
        &args.out_dir.join("centroids.csv"),
        &out.pipeline.feature_names,
        &out.pipeline.clustering.centroids,
    )?;
    let report_path = args.out_dir.join("bench_report.json");
    output::write_json(&report_path, &out.report)?;
    print!("{}", render_bench(&out.report));
    println!("bench report -> {}", report_path.display());
    Ok(())
}

fn materialize(args: MaterializeArgs) -> Result<(), CliError> {
    if args.coreset == args.matrix {
        return Err(CliError::Config(
            "pass exactly one of --coreset or --matrix".into(),
        ));
    }
    let config = args.common.load()?;
    let inputs = relkm_cli::pipeline::load_inputs(&config)?;
    let feature_names: Vec<String> = inputs
        .query
        .features
        .iter()
        .map(|f| f.attribute.clone())
        .collect();

    if args.matrix {
        let tree = build_join_tree(&inputs.query, inputs.relations)?;
        let matrix = materialize_join(&tree, &inputs.query.features, config.materialize_cap)?;
        output::write_matrix_csv(&args.out, &matrix)?;
        println!(
            "matrix: {} distinct rows, total weight {} -> {}",
            matrix.rows.len(),
            matrix.total_weight(),
            args.out.display()
        );
        return Ok(());
    }

    let kappa = config.kappa_param()?;
    let tree = build_join_tree(&inputs.query, inputs.relations)?;
    let tree = relkm_core::marginal::semijoin_reduce(&tree)?;
    let marginals = compute_marginals(&tree, &inputs.query.features)?;
    let dims = relkm_cli::pipeline::solve_subspaces(
        &marginals,
        &inputs.feature_kinds,
        kappa,
        config.threads,
    )?;
    let quantized = relkm_core::coreset::quantize_relations(&tree, &dims, &inputs.query.features)?;
    let coreset = relkm_core::coreset::build_coreset(&quantized, dims)?;
    output::write_coreset_csv(&args.out, &feature_names, &coreset)?;
    println!(
        "coreset: {} cells, total weight {} -> {}",
        coreset.len(),
        coreset.total_weight,
        args.out.display()
    );
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let config = args.common.load()?;
    let inputs = relkm_cli::pipeline::load_inputs(&config)?;
    let fd_chains = inputs.fd_chains.clone();
    let report = validate_fds(&fd_chains, &inputs.relations);
    let features = inputs.query.features.clone();
    let tree = build_join_tree(&inputs.query, inputs.relations)?;
    println!(
        "query: alpha-acyclic, join tree over {} relations",
        tree.node_count()
    );
    let count = relkm_core::marginal::compute_join_count(&tree)?;
    println!("join cardinality |X|: {count}");

    if report.checks.is_empty() {
        println!("fd chains: none declared");
    }
    for check in &report.checks {
        let status = match &check.status {
            FdStatus::Holds => "holds".to_string(),
            FdStatus::Violated { witness, seen } => {
                format!("VIOLATED (`{witness}` maps to {seen:?})")
            }
            FdStatus::NotColocated => "not co-located in any relation".to_string(),
        };
        println!("fd {} -> {}: {status}", check.from, check.to);
    }

    let marginals = compute_marginals(&tree, &features)?;
    match &args.marginals_out {
        Some(path) => {
            output::write_marginals_csv(path, &marginals)?;
            println!("marginals -> {}", path.display());
        }
        None => {
            println!("feature,value,weight");
            for table in &marginals {
                for (value, weight) in &table.entries {
                    println!("{},{},{}", table.feature, value, weight);
                }
            }
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        keys_p: args.keys_p,
        keys_s: args.keys_s,
        sparsity: args.sparsity,
        reps_p: args.reps_p,
        reps_s: args.reps_s,
        clusters: args.clusters,
        spread: args.spread,
        jitter: args.jitter,
        fd_chain_lengths: args.fd_chain,
        fd_base_cardinality: args.fd_base,
        round_decimals: args.round_decimals,
        seed: args.seed,
    };
    let summary = generate(&spec, &args.out_dir)?;
    println!(
        "wrote {} (fact rows {}, total input rows {}, join cardinality {})",
        summary.config_path.display(),
        summary.fact_rows,
        summary.total_input_rows,
        summary.expected_join_rows
    );
    Ok(())
}
