//! `kmle`: simulate, cluster, select, evaluate and score multivariate time
//! series with k-VARs.
//!
//! Exit codes: 0 ok, 2 usage or invalid input, 3 I/O, 4 numeric
//! degeneracy, 5 no restart passed `--loglik-threshold`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "kmle", version, about = "Hard clustering of multivariate time series with k-VARs")]
struct Cli {
    #[command(flatten)]
    run: RunFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RunFlags {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Stopping tolerance.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,

    /// Maximum parameter steps per run.
    #[arg(long = "max-iter", global = true, default_value_t = 200)]
    pub max_iter: usize,

    /// Stopping rule.
    #[arg(long, global = true, value_enum, default_value_t = StopArg::Loglik)]
    pub stop: StopArg,

    /// Add a tiny diagonal jitter to singular covariances instead of failing.
    #[arg(long, global = true)]
    pub ridge: bool,

    /// Random restarts per run (per cell for `select`).
    #[arg(long, global = true, default_value_t = 5)]
    pub restarts: usize,

    /// Only restarts whose final log-likelihood reaches this value compete.
    #[arg(long = "loglik-threshold", global = true, allow_negative_numbers = true)]
    pub loglik_threshold: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopArg {
    Param,
    Loglik,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseArg {
    Gaussian,
    T,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitArg {
    Random,
    Oracle,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Grid,
    Cyclic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic dataset directory with truth.json.
    Simulate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        k: usize,
        /// Series per cluster.
        #[arg(long)]
        nc: usize,
        #[arg(long)]
        t: usize,
        /// Companion spectral radius of each generated model.
        #[arg(long, default_value_t = 0.9)]
        radius: f64,
        /// Rescale each model to this SNR (dB).
        #[arg(long = "snr-db", allow_negative_numbers = true)]
        snr_db: Option<f64>,
        #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
        noise: NoiseArg,
        /// Degrees of freedom for `--noise t`.
        #[arg(long, default_value_t = 5.0)]
        dof: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a dataset and write the result JSON.
    Cluster {
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, value_enum, default_value_t = InitArg::Random)]
        init: InitArg,
        /// Truth file for `--init oracle` (default: DATA/truth.json).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Fail on an empty cluster instead of moving a series into it.
        #[arg(long = "no-rescue")]
        no_rescue: bool,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BIC over a (K, p) grid; writes bic.csv and best.json.
    Select {
        data: PathBuf,
        /// `start:step:end`, e.g. 2:2:20.
        #[arg(long = "k-grid")]
        k_grid: String,
        /// `start:step:end`, e.g. 1:1:4.
        #[arg(long = "p-grid")]
        p_grid: String,
        #[arg(long, value_enum, default_value_t = SearchMode::Grid)]
        mode: SearchMode,
        /// Starting cell `K,p` for cyclic search (default: smallest grid values).
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agreement measures between two label files.
    Evaluate {
        a: PathBuf,
        b: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every series against every model of a result or truth file.
    Score {
        data: PathBuf,
        model: PathBuf,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.run.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let run = &cli.run;
    let outcome = match cli.command {
        Command::Simulate {
            m,
            p,
            k,
            nc,
            t,
            radius,
            snr_db,
            noise,
            dof,
            out,
        } => commands::simulate(run, m, p, k, nc, t, radius, snr_db, noise, dof, &out),
        Command::Cluster {
            data,
            k,
            p,
            init,
            truth,
            no_rescue,
            out,
        } => commands::cluster(run, &data, k, p, init, truth.as_deref(), no_rescue, out.as_deref()),
        Command::Select {
            data,
            k_grid,
            p_grid,
            mode,
            start,
            out,
        } => commands::select(run, &data, &k_grid, &p_grid, mode, start.as_deref(), &out),
        Command::Evaluate { a, b, out } => commands::evaluate(&a, &b, out.as_deref()),
        Command::Score { data, model, out } => commands::score(&data, &model, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", commands::describe(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
