use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

/// Home-location inference on reciprocal mention networks.
#[derive(Debug, Parser)]
#[command(name = "geotv", version, about)]
struct Cli {
    /// Worker threads (default: available parallelism). Outputs do not depend
    /// on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the primary output to standard output instead of a file.
    #[arg(long, global = true)]
    stdout: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the reciprocal weighted network from directed mention counts.
    Ingest(IngestArgs),
    /// Derive seed locations from GPS events and profile strings.
    Seed(SeedArgs),
    /// Run dispersion-constrained inference from seeds.
    Infer(InferArgs),
    /// Generate a planted-city benchmark.
    Synth(SynthArgs),
    /// Score estimates against held-out truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Mention counts: src_id, dst_id, count.
    #[arg(long)]
    pub mentions: PathBuf,
    /// Network output: u, v, weight.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(from_global)]
    pub stdout: bool,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// GPS events: user_id, lat, lon, unix_timestamp.
    #[arg(long, required_unless_present = "profiles")]
    pub gps: Option<PathBuf>,
    /// Profile claims: user_id, observed_at, raw_text.
    #[arg(long, requires_all = ["gazetteer", "now"])]
    pub profiles: Option<PathBuf>,
    /// Place names: name, lat, lon.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    /// Reference time for profile staleness, Unix seconds.
    #[arg(long)]
    pub now: Option<i64>,
    /// Seed output: user_id, lat, lon, source, spread_km.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hold out this fraction of the seeds as a test set.
    #[arg(long, requires_all = ["rng_seed", "test_out"])]
    pub holdout: Option<f64>,
    /// Seed for the holdout draw.
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Where the held-out seeds go.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(from_global)]
    pub stdout: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub seeds: PathBuf,
    /// Largest accepted ego-network dispersion, km; `inf` disables it.
    #[arg(long, default_value_t = 100.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5)]
    pub iterations: usize,
    /// Median objective tolerance, km per unit weight.
    #[arg(long, default_value_t = 0.01)]
    pub median_tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub median_max_iter: usize,
    /// Estimates output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration CSV (default: next to the estimates).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Count accepted updates that increase a node's variation.
    #[arg(long)]
    pub check_descent: bool,
    #[arg(from_global)]
    pub stdout: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Start from the committed benchmark configuration; other flags override.
    #[arg(long)]
    pub benchmark: bool,
    #[arg(long)]
    pub num_cities: Option<usize>,
    #[arg(long)]
    pub users_per_city: Option<usize>,
    /// km
    #[arg(long)]
    pub city_radius: Option<f64>,
    #[arg(long)]
    pub mean_degree: Option<f64>,
    #[arg(long)]
    pub inter_fraction: Option<f64>,
    #[arg(long)]
    pub seed_fraction: Option<f64>,
    #[arg(long, required_unless_present = "benchmark")]
    pub rng_seed: Option<u64>,
    /// Move this fraction of seeds to other cities.
    #[arg(long)]
    pub mislocate: Option<f64>,
    /// Seed for choosing and moving mislocated seeds.
    #[arg(long, requires = "mislocate")]
    pub mislocate_rng_seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(from_global)]
    pub stdout: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub estimates: PathBuf,
    /// Held-out truth in the seed format.
    #[arg(long)]
    pub truth: PathBuf,
    /// City table for reverse geocoding: name, lat, lon, population.
    #[arg(long)]
    pub cities: Option<PathBuf>,
    #[arg(long, default_value_t = geotv::eval::DEFAULT_MIN_POPULATION)]
    pub min_pop: u64,
    /// Gamma values (km) for a sweep, comma separated; `inf` allowed.
    #[arg(long, value_delimiter = ',', requires_all = ["network", "seeds"])]
    pub sweep: Vec<f64>,
    /// Network for the sweep.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Training seeds for the sweep.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Rounds per sweep run.
    #[arg(long, default_value_t = 5)]
    pub iterations: usize,
    /// Error histogram bin edges, km, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,25,50,100,250,500,1000,2500,5000")]
    pub bins: Vec<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(from_global)]
    pub stdout: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("geotv: error: cannot start {n} workers: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Seed(a) => commands::seed(a),
        Command::Infer(a) => commands::infer(a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geotv: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
