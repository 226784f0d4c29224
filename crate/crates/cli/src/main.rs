use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

/// Beta-expansions, pressure and dimension of shrinking-target sets.
#[derive(Debug, Parser)]
#[command(name = "betashrink", version)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "BETASHRINK_THREADS")]
    pub threads: Option<usize>,
    /// Directory for CSV tables and the TOML summary.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BetaArgs {
    /// Base: a decimal, an integer or `golden`.
    #[arg(long)]
    pub beta: Option<String>,
    /// Fail instead of warning past the precision cap.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TargetArgs {
    #[command(flatten)]
    pub beta: BetaArgs,
    /// Potential for the x-coordinate (`2.0`, `poly:a0,a1,..`, `pwl:x:y,..`).
    #[arg(long = "f")]
    pub f: Option<String>,
    /// Potential for the y-coordinate.
    #[arg(long = "g")]
    pub g: Option<String>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub y0: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Digits of x (or of 1) to n places.
    Expand {
        #[command(flatten)]
        beta: BetaArgs,
        #[arg(long)]
        x: Option<f64>,
        /// Expand 1 (the infinite expansion for simple Parry numbers).
        #[arg(long)]
        one: bool,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Count or list admissible words of length n.
    Words {
        #[command(flatten)]
        beta: BetaArgs,
        #[arg(long)]
        n: Option<usize>,
        /// `all`, `full`, `zeros:N` or `full-zeros:N`.
        #[arg(long)]
        filter: Option<String>,
        /// Write every word with its cylinder to words.csv.
        #[arg(long)]
        list: bool,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Geometry of one cylinder.
    Cylinder {
        #[command(flatten)]
        beta: BetaArgs,
        /// Digits, e.g. `0101` or `0,1,0,1`.
        #[arg(long)]
        word: Option<String>,
    },
    /// Pressure estimate with bracket.
    Pressure {
        #[command(flatten)]
        beta: BetaArgs,
        #[arg(long)]
        potential: Option<String>,
        /// One order (`12`) or a range (`4..12`).
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Brackets for s1, s2 and s0.
    Dimension {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Also run the series-ratio probe.
        #[arg(long)]
        probe: bool,
    },
    /// Partial sums of the dimension series.
    Series {
        #[command(flatten)]
        target: TargetArgs,
        /// Exponents, comma separated.
        #[arg(long)]
        s: Option<String>,
        #[arg(long)]
        n_lo: Option<usize>,
        #[arg(long)]
        n_hi: Option<usize>,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Build the Cantor subset, assign mass and audit it.
    Cantor(Box<CantorArgs>),
    /// Box counting of the finite-stage set.
    Boxdim {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        n_lo: Option<usize>,
        #[arg(long)]
        n_hi: Option<usize>,
        /// Grid exponents, comma separated.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        budget: Option<f64>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CantorArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Zero block length N.
    #[arg(long)]
    pub zero_block: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// e.g. `8,auto`.
    #[arg(long)]
    pub m_schedule: Option<String>,
    /// `CaseI` or `CaseII`; default from s0.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub word_budget: Option<usize>,
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long)]
    pub pair_budget: Option<usize>,
    #[arg(long)]
    pub element_budget: Option<usize>,
    #[arg(long)]
    pub use_subsystem: bool,
    /// Exponent for the mass-versus-length check (default s0 - 0.1).
    #[arg(long)]
    pub check_s: Option<f64>,
    /// Exponent for the mass distribution audit (default s0 - 0.1).
    #[arg(long)]
    pub mdp_s: Option<f64>,
    /// Constant of the audit (default 3 beta^2).
    #[arg(long)]
    pub mdp_c: Option<f64>,
    #[arg(long)]
    pub mdp_delta: Option<f64>,
    #[arg(long)]
    pub mdp_balls: Option<usize>,
    #[arg(long)]
    pub mdp_seed: Option<u64>,
    /// Number of sampled points with witnesses.
    #[arg(long)]
    pub points: Option<usize>,
    /// Write every piece to cantor_levels.csv.
    #[arg(long)]
    pub dump: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<betashrink::Error>() {
        Some(e) if e.is_hypothesis_violation() => 2,
        Some(e) if e.is_budget() => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = config::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.run.threads);
    let out_dir = cli.out_dir.clone().or_else(|| file.run.out_dir.clone());
    match threads {
        Some(0) => Err(betashrink::Error::Config("--threads must be at least 1".into()).into()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build()?;
            pool.install(|| commands::dispatch(cli.command, &file, out_dir))
        }
        None => commands::dispatch(cli.command, &file, out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
