//! `olc`: simulate, discover, evaluate and benchmark linear non-Gaussian models with latent confounders.

mod bench;
mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lingam_olc::Config;

use crate::commands::ModelChoice;
use crate::error::{CliError, CliResult};

/// Environment variable giving the default `--jobs` for `bench`.
const JOBS_ENV: &str = "OLC_JOBS";

#[derive(Parser)]
#[command(name = "olc", version, about = "Causal discovery with latent confounders from higher-order cumulants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample data from a benchmark case or a random model.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=10), conflicts_with = "random", required_unless_present = "random")]
        case: Option<u32>,
        #[arg(long, requires_all = ["p", "latents"])]
        random: bool,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        latents: Option<usize>,
        #[arg(long, default_value_t = 0.2)]
        density: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Learn a causal graph from a CSV file.
    Discover {
        data: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score a learned graph against simulation truth.
    Eval {
        graph: PathBuf,
        truth: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Repeat simulate, discover and eval over cases and sample sizes.
    Bench {
        #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u32).range(1..=10))]
        cases: Vec<u32>,
        #[arg(long = "n", value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads; defaults to $OLC_JOBS, then the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print a sample cumulant with its jackknife standard error.
    Cumulants {
        data: PathBuf,
        /// Comma-separated column labels, one per cumulant index.
        #[arg(long, value_delimiter = ',', required = true)]
        idx: Vec<String>,
        /// Two-variable cumulant of order up to 6.
        #[arg(long)]
        pair: bool,
    },
}

#[derive(Args)]
struct SearchArgs {
    /// File of `key = value` lines overriding the defaults; flags override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    ratio_scan: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
}

impl SearchArgs {
    fn resolve(&self) -> CliResult<Config> {
        let mut cfg = config::load(self.config.as_deref())?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.permutations {
            cfg.n_permutations = v;
        }
        if let Some(v) = self.ratio_scan {
            cfg.ratio_scan = v;
        }
        if self.max_rounds.is_some() {
            cfg.max_rounds = self.max_rounds;
        }
        Ok(cfg)
    }
}

fn default_jobs() -> CliResult<usize> {
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&j| j > 0)
            .ok_or_else(|| CliError::Usage(format!("{JOBS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { case, random, p, latents, density, n, seed, out } => {
            let model = match (case, random) {
                (Some(c), false) => ModelChoice::Case(c),
                (None, true) => ModelChoice::Random {
                    p: p.expect("clap enforces --p"),
                    latents: latents.expect("clap enforces --latents"),
                    density,
                },
                _ => return Err(CliError::Usage("give exactly one of --case or --random".into())),
            };
            commands::simulate(model, n, seed, &out)
        }
        Command::Discover { data, search, out } => commands::discover(&data, search.resolve()?, &out),
        Command::Eval { graph, truth, out } => commands::eval(&graph, &truth, &out),
        Command::Bench { cases, sizes, trials, seed, jobs, config, out } => {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            let config = config::load(config.as_deref())?;
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let jobs = match jobs {
                Some(j) => j,
                None => default_jobs()?,
            };
            commands::bench(bench::Plan { cases, sizes, trials, seed, config }, jobs, &out)
        }
        Command::Cumulants { data, idx, pair } => commands::cumulants(&data, &idx, pair),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
