//! `mms-lab`: runs one experiment per invocation and writes its artifacts.
//!
//! Exit codes: 0 on a completed run (whatever the verdict), 2 on invalid
//! input, 3 when a search budget is exhausted, 1 on I/O failures.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mms-lab", version, about = "Experiments on finite pointed metric measure spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Curvature bound K.
    #[arg(long = "K", global = true, allow_hyphen_values = true)]
    pub k: Option<f64>,
    /// Dimension bound N.
    #[arg(long = "N", global = true)]
    pub n: Option<f64>,
    /// Interpolation times, comma separated.
    #[arg(long = "t-grid", global = true, value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
    /// Entropy exponents N', comma separated (default N, N+1, 2N).
    #[arg(long = "Nprime-grid", global = true, value_delimiter = ',')]
    pub nprime_grid: Option<Vec<f64>>,
    /// Radii, comma separated: blow-up radii for blowup/dimension, profile
    /// radii for doubling, comparison radii for ghdist.
    #[arg(long, global = true, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Window radius of blow-up members, or the half-width of the split box.
    #[arg(long, global = true)]
    pub window: Option<f64>,
    /// Verdict tolerance of the CD* check (default 5·h·diam).
    #[arg(long = "tol-cd", global = true)]
    pub tol_cd: Option<f64>,
    /// Additive defect allowed along a line.
    #[arg(long = "tol-line", global = true)]
    pub tol_line: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
}

/// Where the space comes from: a JSON space file or a model shorthand
/// (`euclidean-grid:2d`, `lp-plane:inf`, `sphere`, `cylinder`, ...).
#[derive(Args, Debug, Clone)]
pub struct Input {
    /// Space file.
    pub path: Option<PathBuf>,
    #[arg(long, conflicts_with = "path")]
    pub model: Option<String>,
}

/// Marginals as CSV (`index,mass` rows or one mass per line). Without them,
/// both are the normalized reference measure on a ball of radius D/4 around
/// the endpoints p, q of a diameter-like pair (p farthest from the base, q
/// farthest from p, D = d(p, q)).
#[derive(Args, Debug, Clone)]
pub struct Marginals {
    #[arg(long)]
    pub mu0: Option<PathBuf>,
    #[arg(long)]
    pub mu1: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quadratic transport cost and an optimal plan.
    W2 {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        marginals: Marginals,
        /// Use the entropic solver with this regularization.
        #[arg(long)]
        entropic: Option<f64>,
    },
    /// CD*(K, N) inequality along optimal plans.
    Cdstar {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        marginals: Marginals,
        /// Search every vertex-optimal plan (small supports only).
        #[arg(long)]
        exhaustive: bool,
    },
    /// Transport of a ball onto its center.
    Prolong {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Center index (default: the basepoint).
        #[arg(long)]
        x0: Option<usize>,
    },
    /// Doubling ratios, envelope and the iterated bound.
    Doubling {
        #[command(flatten)]
        input: Input,
        /// Number of sampled centers.
        #[arg(long, default_value_t = 256)]
        centers: usize,
        /// Samples of the iterated bound.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Distance surrogate between two spaces, both normalized at radius 1.
    Ghdist {
        first: String,
        second: String,
        #[arg(long)]
        exhaustive: bool,
        /// Annealing proposals per radius.
        #[arg(long, default_value_t = 10_000)]
        proposals: usize,
    },
    /// Blow-up sequence and tangent model matching.
    Blowup {
        #[command(flatten)]
        input: Input,
        /// Models: `R^d` (or `euclidean:d`), `lp:P` (`lp:inf`), or a space file.
        #[arg(long, value_delimiter = ',', default_value = "R^1,R^2,R^3")]
        models: Vec<String>,
    },
    /// Line detection and splitting at the basepoint.
    Split {
        #[command(flatten)]
        input: Input,
        /// Line length (default: half the distance to the farthest point).
        #[arg(long)]
        length: Option<f64>,
        #[arg(long)]
        quotient_radius: Option<f64>,
    },
    /// Number of lines split off iteratively, at most ⌊N⌋.
    Dimension {
        #[command(flatten)]
        input: Input,
    },
    /// Model catalogue.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
}

#[derive(Subcommand, Debug)]
pub enum ModelsAction {
    List,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mms_lab::Error>() {
            return match e {
                mms_lab::Error::BudgetExceeded(_) => 3,
                mms_lab::Error::Io(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<commands::Invalid>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
