//! Command-line pipeline: validity checks, Riccati solve, n-insurer
//! equilibrium, mean-field limit, convergence experiment, Monte Carlo
//! simulation, and parameter sweeps.

mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use riskgame::load_config;
use run::CommonArgs;

#[derive(Parser)]
#[command(
    name = "riskgame",
    version,
    about = "Equilibrium investment-reinsurance strategies for competing insurers \
             under 4/2 stochastic volatility and model ambiguity"
)]
struct Cli {
    /// JSON configuration document (keys: market, game, insurers, numerics).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Main output file; secondary files are written alongside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override numerics.steps (grid intervals over [0, T]).
    #[arg(long, global = true)]
    steps: Option<usize>,

    /// Override numerics.paths (Monte Carlo paths).
    #[arg(long, global = true)]
    paths: Option<usize>,

    /// Override numerics.dt (Monte Carlo step, years).
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Override numerics.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override numerics.tol (fixed-point tolerance).
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Proceed past soft validity failures with a warning. Hard failures
    /// (Feller condition, degenerate competition) always stop.
    #[arg(long, global = true)]
    force: bool,

    /// Mirror every CSV output as a JSON array of row objects.
    #[arg(long, global = true)]
    emit_json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the configuration and evaluate the existence certificates.
    Check,
    /// Solve the value-function factor slopes; writes t,insurer_id,v3,upsilon3,v2.
    Riccati,
    /// Solve the full n-insurer equilibrium; writes strategies, their
    /// decomposition, and worst-case distortions (plus vartheta_cross.csv).
    Equilibrium,
    /// Solve the mean-field limit treating the insurers as weighted atoms.
    Meanfield {
        /// Comma-separated atom weights (default: uniform).
        #[arg(long)]
        weights: Option<String>,
    },
    /// Finite-n convergence experiment toward the mean-field limit.
    Converge {
        /// Comma-separated atom weights (default: uniform).
        #[arg(long)]
        weights: Option<String>,
        /// Comma-separated game sizes.
        #[arg(long, default_value = "4,16,64,256")]
        n_list: String,
        /// Comma-separated sampling seeds.
        #[arg(long, default_value = "0,1,2,3,4,5,6,7")]
        seeds: String,
    },
    /// Monte Carlo summary under a chosen measure.
    Simulate {
        /// 'reference' or 'worst-case:<insurer>' (1-based).
        #[arg(long, default_value = "reference")]
        measure: String,
        /// Also write per-path terminal relative wealth to terminal.csv.
        #[arg(long)]
        dump_terminal: bool,
        /// Comma-separated times at which to record the factor level.
        #[arg(long)]
        obs_times: Option<String>,
    },
    /// Sweep one parameter and record a quantity per swept value.
    Sweep {
        /// Parameter path, e.g. game.lambda_hat or insurers[0].theta.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Number of sweep values (>= 2), endpoints included.
        #[arg(long, default_value = "5")]
        sweep_steps: usize,
        /// Evaluate at this time; omit for the full trajectory.
        #[arg(long)]
        at_time: Option<f64>,
        /// 'a_star:<insurer>' or 'ell:<insurer>' (1-based).
        #[arg(long)]
        quantity: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config <path> is required");
            return ExitCode::from(2);
        }
    };
    let mut config = match load_config(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(steps) = cli.steps {
        config.numerics.steps = steps;
    }
    if let Some(paths) = cli.paths {
        config.numerics.paths = paths;
    }
    if let Some(dt) = cli.dt {
        config.numerics.dt = Some(dt);
    }
    if let Some(seed) = cli.seed {
        config.numerics.seed = seed;
    }
    if let Some(tol) = cli.tol {
        config.numerics.tol = tol;
    }

    let args = CommonArgs {
        config,
        out: cli.out.clone(),
        force: cli.force,
        emit_json: cli.emit_json,
    };

    let outcome = match &cli.command {
        Command::Check => run::cmd_check(&args),
        Command::Riccati => run::cmd_riccati(&args),
        Command::Equilibrium => run::cmd_equilibrium(&args),
        Command::Meanfield { weights } => run::cmd_meanfield(&args, weights.as_deref()),
        Command::Converge {
            weights,
            n_list,
            seeds,
        } => run::cmd_converge(&args, weights.as_deref(), n_list, seeds),
        Command::Simulate {
            measure,
            dump_terminal,
            obs_times,
        } => run::cmd_simulate(&args, measure, *dump_terminal, obs_times.as_deref()),
        Command::Sweep {
            param,
            from,
            to,
            sweep_steps,
            at_time,
            quantity,
        } => run::cmd_sweep(&args, param, *from, *to, *sweep_steps, *at_time, quantity),
    };

    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code_for(&e))
        }
    }
}
