//! Clap argument definitions for the `stelab` binary.

use clap::{Parser, Subcommand};

/// Spectral transfer entropy lab: simulate coupled band-limited signals,
/// test directional links, and compare against Granger causality.
#[derive(Debug, Parser)]
#[command(name = "stelab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a coupled two-channel signal pair with known ground truth
    Simulate(SimulateArgs),
    /// Run the STE significance-test matrix on a CSV of channels
    Ste(SteArgs),
    /// VAR-based Wald test for Granger causality on a two-channel CSV
    Gc(GcArgs),
    /// Rejection-proportion experiments over simulated replicates
    Table(TableArgs),
    /// Benjamini-Hochberg adjustment of a p-value CSV
    Adjust(AdjustArgs),
}

#[derive(Debug, Parser)]
pub struct SimulateArgs {
    /// Generator config JSON; defaults are used when omitted
    #[arg(long)]
    pub config: Option<String>,
    /// Output CSV path (columns X, Y); ground truth goes to <out>.truth.json
    #[arg(long, short)]
    pub out: String,
    /// Signal length in seconds (overrides config)
    #[arg(long)]
    pub n_seconds: Option<f64>,
    /// Root seed; falls back to STE_LAB_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Parser)]
pub struct SteArgs {
    /// Input CSV with a header row of channel labels
    pub input: String,
    /// Sampling rate in Hz
    #[arg(long)]
    pub fs: f64,
    /// Band pairs: "all", a band name, "x_band:y_band", or a comma list
    #[arg(long, default_value = "all")]
    pub bands: String,
    /// Block size in samples
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    /// Lags of the source past
    #[arg(short, default_value_t = 2)]
    pub k: usize,
    /// Lags of the target past
    #[arg(short, default_value_t = 2)]
    pub l: usize,
    /// Resamples of the significance test
    #[arg(short = 'R', long = "resamples", default_value_t = 5000)]
    pub r: usize,
    /// Monte-Carlo size of each TE evaluation
    #[arg(long, default_value_t = 10_000)]
    pub t_star: usize,
    /// Margin model: ecdf or gev
    #[arg(long, default_value = "ecdf")]
    pub margin: String,
    /// Margin refit window in seconds (0 = single segment)
    #[arg(long, default_value_t = 15.0)]
    pub segment_seconds: f64,
    /// Candidate copula families (comma list) or "all"
    #[arg(long, default_value = "all")]
    pub families: String,
    /// Report significance level
    #[arg(long, default_value_t = 0.10)]
    pub alpha: f64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Root seed; falls back to STE_LAB_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the raw relative frequency instead of the smoothed p-value
    #[arg(long)]
    pub raw_pvalue: bool,
    /// Output JSON path
    #[arg(long, short)]
    pub out: String,
}

#[derive(Debug, Parser)]
pub struct GcArgs {
    /// Input CSV with exactly two channels
    pub input: String,
    /// Sampling rate in Hz
    #[arg(long)]
    pub fs: f64,
    /// VAR lag order
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Optional causal band filter before fitting: preset name or "lo:hi"
    #[arg(long)]
    pub band: Option<String>,
    /// Output JSON path
    #[arg(long, short)]
    pub out: String,
}

#[derive(Debug, Parser)]
pub struct TableArgs {
    /// Experiment: table2 (WGC artifact), table3 (STE power/size, eta=32),
    /// table4 (eta=64)
    #[arg(long)]
    pub experiment: String,
    /// Simulation replicates per cell
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Resamples per STE test
    #[arg(short = 'R', long = "resamples", default_value_t = 200)]
    pub r: usize,
    /// Block sizes to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![32usize])]
    pub m: Vec<usize>,
    /// Lag count (k = l for STE, VAR order for WGC)
    #[arg(long, short, default_value_t = 1)]
    pub p: usize,
    /// Signal lengths in seconds
    #[arg(long, value_delimiter = ',', default_values_t = vec![30.0])]
    pub n_seconds: Vec<f64>,
    /// Rejection level
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Root seed; falls back to STE_LAB_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path
    #[arg(long, short)]
    pub out: String,
}

#[derive(Debug, Parser)]
pub struct AdjustArgs {
    /// Input CSV with a `p` column (any other columns pass through)
    pub input: String,
    /// Output CSV path; adds a `p_adjusted` column
    #[arg(long, short)]
    pub out: String,
}

/// Root seed resolution: flag, then STE_LAB_SEED, then 0.
pub fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("STE_LAB_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}
