//! Deterministic file-in/file-out command line interface.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 bad data or I/O, 4 numerical
//! failure. Commands that use randomness take an explicit `--seed` and echo
//! it on stdout; given the same inputs and flags, every command writes
//! byte-identical outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::TestSelection;
use crate::decomp::{fit_restarts, FitConfig};
use crate::diagnostics::{gen_synthetic, rank_scan, select_rank, ScanOptions, SynthSpec};
use crate::error::{Error, Result};
use crate::featurize::{build_tensor, impute_mean_tensor, minmax_normalize};
use crate::io;
use crate::io::{ModelMeta, StoredModel};
use crate::report::{write_report, ReportConfig};

#[derive(Debug, Parser)]
#[command(
    name = "ntfkit",
    version,
    about = "Behavioral sensing tensors: featurize event logs, fit non-negative CP models, scan ranks, and report component/outcome associations"
)]
pub struct Cli {
    /// Cap the worker thread pool (default: one thread per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a normalized feature tensor from an event log.
    Tensorize(TensorizeArgs),
    /// Fit a non-negative CP model with multi-restart HALS.
    Fit(FitArgs),
    /// Score a range of ranks by core consistency.
    RankScan(RankScanArgs),
    /// Summarize a fitted model and test metadata associations.
    Report(ReportArgs),
    /// Generate a synthetic dataset with known factors.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TensorizeArgs {
    /// Event CSV: user_id,stream,state,start_unix,end_unix.
    #[arg(long)]
    pub events: PathBuf,
    /// Feature schema file.
    #[arg(long)]
    pub schema: PathBuf,
    /// Output tensor file.
    #[arg(long)]
    pub out_tensor: PathBuf,
    /// Output label sidecar.
    #[arg(long)]
    pub out_labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input tensor file. Missing cells are mean-imputed per variable.
    #[arg(long)]
    pub tensor: PathBuf,
    /// Label sidecar; defaults to index labels when absent.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Number of components.
    #[arg(long)]
    pub rank: usize,
    /// Base RNG seed; restart i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random restarts; the best fit (core consistency, then error) is kept.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Sweep budget per restart.
    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,
    /// Convergence threshold on the change in relative error.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankScanArgs {
    /// Input tensor file. Missing cells are mean-imputed per variable.
    #[arg(long)]
    pub tensor: PathBuf,
    /// Inclusive rank range, e.g. 2..6.
    #[arg(long)]
    pub ranks: String,
    /// Fits per rank (seeds seed..seed+inits-1, same for every rank).
    #[arg(long, default_value_t = 10)]
    pub inits: usize,
    /// Base RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep budget per fit.
    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,
    /// Convergence threshold on the change in relative error.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Output scan CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Fitted model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Metadata CSV: user_id,metric,value.
    #[arg(long)]
    pub metadata: PathBuf,
    /// Report output directory.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated metrics to test (default: all in the metadata).
    #[arg(long)]
    pub metrics: Option<String>,
    /// Variables listed per component.
    #[arg(long, default_value_t = 15)]
    pub top_k: usize,
    /// Membership cut: top fraction of individuals by loading.
    #[arg(long, default_value_t = 0.25)]
    pub top_fraction: f64,
    /// Test family: welch, anova (parametric) or ks, kruskal (rank-based).
    #[arg(long, default_value = "welch")]
    pub test: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Tensor dimensions as I,J,K.
    #[arg(long)]
    pub dims: String,
    /// Number of planted components.
    #[arg(long)]
    pub rank: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Additive noise level as a signal-to-noise ratio in dB.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Fraction of cells masked as missing.
    #[arg(long, default_value_t = 0.0)]
    pub missing: f64,
    /// Fraction of factor entries zeroed per column.
    #[arg(long, default_value_t = 0.0)]
    pub sparsity: f64,
    /// Output tensor file.
    #[arg(long)]
    pub out_tensor: PathBuf,
    /// Output model file holding the planted factors.
    #[arg(long)]
    pub out_model: PathBuf,
    /// Optional label sidecar output.
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
}

/// Parses, runs, and maps the outcome to a process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; those are not failures
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not resize thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Tensorize(args) => cmd_tensorize(args),
        Command::Fit(args) => cmd_fit(args),
        Command::RankScan(args) => cmd_rank_scan(args),
        Command::Report(args) => cmd_report(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn parse_rank_range(s: &str) -> Result<Vec<usize>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::invalid(format!("invalid rank range {s:?}, expected A..B")))?;
    let lo: usize = a
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("invalid rank {a:?} in range {s:?}")))?;
    let hi: usize = b
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("invalid rank {b:?} in range {s:?}")))?;
    if lo == 0 {
        return Err(Error::invalid("ranks start at 1".to_string()));
    }
    if hi < lo {
        return Err(Error::invalid(format!("empty rank range {s:?}")));
    }
    Ok((lo..=hi).collect())
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!("invalid dims {s:?}, expected I,J,K")));
    }
    let mut vals = [0usize; 3];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("invalid dimension {part:?} in {s:?}")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn cmd_tensorize(args: TensorizeArgs) -> Result<()> {
    let schema = io::read_schema(&args.schema)?;
    let records = io::read_events(&args.events)?;
    let (ds, report) = build_tensor(&records, &schema)?;
    let ds = minmax_normalize(ds);
    io::write_dataset(&args.out_tensor, &args.out_labels, &ds)?;
    let (i, j, k) = ds.tensor().dims();
    println!("tensor {i} x {j} x {k}");
    println!("dropped_records {}", report.dropped_records);
    println!("missing_slices {}", report.missing_slices);
    println!("wrote {}", args.out_tensor.display());
    println!("wrote {}", args.out_labels.display());
    Ok(())
}

/// Loads labels for a tensor, or falls back to index labels.
fn labels_for(
    tensor_dims: (usize, usize, usize),
    labels: Option<&PathBuf>,
) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let (i_dim, j_dim, k_dim) = tensor_dims;
    match labels {
        Some(path) => {
            let (individuals, variables, n_days) = io::read_labels(path)?;
            if individuals.len() != i_dim || variables.len() != j_dim || n_days != k_dim {
                return Err(Error::data(format!(
                    "label sidecar {} describes ({}, {}, {n_days}), tensor is ({i_dim}, {j_dim}, {k_dim})",
                    path.display(),
                    individuals.len(),
                    variables.len()
                )));
            }
            Ok((individuals, variables, (0..k_dim).map(|k| k.to_string()).collect()))
        }
        None => Ok((
            (0..i_dim).map(|i| i.to_string()).collect(),
            (0..j_dim).map(|j| j.to_string()).collect(),
            (0..k_dim).map(|k| k.to_string()).collect(),
        )),
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut tensor = io::read_tensor(&args.tensor)?;
    let (individuals, variables, days) = labels_for(tensor.dims(), args.labels.as_ref())?;
    let missing = tensor.n_missing();
    if missing > 0 {
        impute_mean_tensor(&mut tensor, Some(&variables))?;
        println!("imputed {missing} missing cells with variable means");
    }
    let mut cfg = FitConfig::new(args.rank, args.seed);
    cfg.max_sweeps = args.max_sweeps;
    cfg.tol = args.tol;
    cfg.n_restarts = args.restarts;
    let (model, trace, diags) = fit_restarts(&tensor, &cfg)?;
    let selected = diags
        .iter()
        .find(|d| d.selected)
        .ok_or_else(|| Error::numerical("no restart was selected".to_string()))?;
    let stored = StoredModel {
        model,
        individuals,
        variables,
        days,
        meta: ModelMeta {
            seed: Some(trace.seed),
            sweeps: Some(trace.sweeps()),
            converged: Some(trace.converged),
            relative_error: Some(selected.relative_error),
            core_consistency: selected.core_consistency,
        },
    };
    io::write_model(&args.out, &stored)?;
    println!("seed {}", args.seed);
    println!("restarts {}", args.restarts);
    println!("selected_seed {}", trace.seed);
    println!("converged {}", trace.converged);
    println!("sweeps {}", trace.sweeps());
    println!("relative_error {}", selected.relative_error);
    match selected.core_consistency {
        Some(cc) => println!("core_consistency {cc}"),
        None => println!("core_consistency undefined"),
    }
    if !trace.reseeds.is_empty() {
        eprintln!("note: {} degenerate column reseed(s) during the selected fit", trace.reseeds.len());
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_rank_scan(args: RankScanArgs) -> Result<()> {
    let ranks = parse_rank_range(&args.ranks)?;
    let mut tensor = io::read_tensor(&args.tensor)?;
    let missing = tensor.n_missing();
    if missing > 0 {
        impute_mean_tensor(&mut tensor, None)?;
        println!("imputed {missing} missing cells with variable means");
    }
    let opts = ScanOptions {
        max_sweeps: args.max_sweeps,
        tol: args.tol,
        ..ScanOptions::default()
    };
    let scan = rank_scan(&tensor, &ranks, args.inits, args.seed, &opts)?;
    io::write_rank_scan(&args.out, &scan)?;
    for w in &scan.warnings {
        eprintln!("warning: {w}");
    }
    println!("seed {}", args.seed);
    for (idx, &rank) in scan.ranks.iter().enumerate() {
        match scan.std_cc[idx] {
            Some(std) => println!("rank {rank} mean_cc {} std_cc {std}", scan.mean_cc[idx]),
            None => println!("rank {rank} mean_cc {} std_cc undefined", scan.mean_cc[idx]),
        }
    }
    if scan.ranks.len() >= 3 {
        println!("selected_rank {}", select_rank(&scan)?);
    } else {
        eprintln!("note: rank selection needs at least 3 consecutive ranks");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let stored = io::read_model(&args.model)?;
    let metadata = io::read_metadata(&args.metadata)?;
    let metrics = args.metrics.as_ref().map(|s| {
        s.split(',')
            .map(|m| m.trim().to_string())
            .filter(|m| !m.is_empty())
            .collect::<Vec<_>>()
    });
    let cfg = ReportConfig {
        top_k: args.top_k,
        top_fraction: args.top_fraction,
        selection: TestSelection::parse(&args.test)?,
        metrics,
    };
    let out = write_report(&args.out_dir, &stored, &metadata, &cfg, &args.model)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = stored.meta.seed {
        println!("seed {seed}");
    }
    println!("wrote {} files to {}", out.files.len(), args.out_dir.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let dims = parse_dims(&args.dims)?;
    let mut spec = SynthSpec::new(dims, args.rank, args.seed);
    spec.noise_snr_db = args.snr_db;
    spec.missing_frac = args.missing;
    spec.sparsity = args.sparsity;
    let synth = gen_synthetic(&spec)?;
    io::write_tensor(&args.out_tensor, synth.dataset.tensor())?;
    if let Some(labels_path) = &args.out_labels {
        io::write_labels(
            labels_path,
            synth.dataset.individuals(),
            synth.dataset.variables(),
            synth.dataset.days().len(),
        )?;
    }
    let stored = StoredModel {
        model: synth.truth,
        individuals: synth.dataset.individuals().to_vec(),
        variables: synth.dataset.variables().to_vec(),
        days: synth.dataset.days().iter().map(|d| d.to_string()).collect(),
        meta: ModelMeta { seed: Some(args.seed), ..ModelMeta::default() },
    };
    io::write_model(&args.out_model, &stored)?;
    for w in &synth.warnings {
        eprintln!("warning: {w}");
    }
    println!("seed {}", args.seed);
    println!("dims {} {} {}", dims.0, dims.1, dims.2);
    println!("rank {}", args.rank);
    println!("wrote {}", args.out_tensor.display());
    if let Some(labels_path) = &args.out_labels {
        println!("wrote {}", labels_path.display());
    }
    println!("wrote {}", args.out_model.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn rank_range_parses_inclusive_bounds() {
        assert_eq!(parse_rank_range("2..6").unwrap(), vec![2, 3, 4, 5, 6]);
        assert_eq!(parse_rank_range("3..3").unwrap(), vec![3]);
        assert!(parse_rank_range("0..3").is_err());
        assert!(parse_rank_range("5..2").is_err());
        assert!(parse_rank_range("5").is_err());
        assert!(parse_rank_range("a..b").is_err());
    }

    #[test]
    fn dims_parse_as_triples() {
        assert_eq!(parse_dims("4,5,6").unwrap(), (4, 5, 6));
        assert_eq!(parse_dims(" 4 , 5 , 6 ").unwrap(), (4, 5, 6));
        assert!(parse_dims("4,5").is_err());
        assert!(parse_dims("4,5,6,7").is_err());
        assert!(parse_dims("4,x,6").is_err());
    }
}
