//! Command-line front end: `torus-homology <command> [flags]`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use torus_homology::harness::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "torus-homology", version, about = "Large deviations of the homology of diffusions on tori")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Built-in scenario name (S1, S2, S3, S4, flat-constant, shear) or config path.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Scenario config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $TORUS_HOMOLOGY_OUT or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for Monte Carlo.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiplier applied to every check tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Harmonic bases, Gram matrices, rotation number and reversibility flags.
    Hodge,
    /// Scaled cumulant generating function on the tilt grid.
    Scgf,
    /// Rate function G and quadratic bound Q along homology rays.
    Rate {
        /// Ray direction, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ray: Option<Vec<f64>>,
        /// Points per ray.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Monte Carlo batch of winding vectors.
    Simulate,
    /// Compare two scenarios (rates, covariance, Monte Carlo with common random numbers).
    Compare {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Full invariant and oracle suite.
    Verify,
    /// Aggregate the reports in the output directory.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let mut opts = RunOptions {
        scenario: cli.common.scenario,
        config: cli.common.config,
        out: cli.common.out,
        seed: cli.common.seed,
        tol_scale: cli.common.tol_scale,
        ..RunOptions::default()
    };
    let cmd = match cli.command {
        Cmd::Hodge => Command::Hodge,
        Cmd::Scgf => Command::Scgf,
        Cmd::Rate { ray, points } => {
            opts.ray = ray;
            opts.points = points;
            Command::Rate
        }
        Cmd::Simulate => Command::Simulate,
        Cmd::Compare { a, b } => {
            opts.a = Some(a);
            opts.b = Some(b);
            Command::Compare
        }
        Cmd::Verify => Command::Verify,
        Cmd::Report => Command::Report,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.common.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cmd, &opts)) {
        Ok(outcome) => {
            for c in &outcome.report.checks {
                println!("{}", c.line());
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
