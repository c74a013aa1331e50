//! Command-line front end: growth-fragmentation eigenproblems from problem
//! files to CSV outputs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use growth_fragmentation::coefficients::{Limit, ModulationMode};
use growth_fragmentation::config::{RunSettings, SolverSettings};
use growth_fragmentation::driver::{run, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "gfsolve",
    version,
    about = "Principal eigenpairs of growth-fragmentation operators",
    long_about = "Computes the fitness (principal eigenvalue) and size distribution of a \
growth-fragmentation population from a problem file, under polymerization or fragmentation \
modulation. Writes CSV files with a configuration digest in every header."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Problem file (sectioned key = value format)
    #[arg(short, long)]
    problem: PathBuf,

    /// Output directory, created if missing
    #[arg(short, long)]
    out: PathBuf,

    /// Truncation radius override
    #[arg(long)]
    r: Option<f64>,

    /// Grid size override
    #[arg(long)]
    n: Option<usize>,

    /// Time step override (default picks one from the rates)
    #[arg(long)]
    dt: Option<f64>,

    /// Convergence threshold override
    #[arg(long)]
    epsilon: Option<f64>,

    /// Iteration budget override
    #[arg(long)]
    max_iters: Option<usize>,

    /// Modulation mode override
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,

    /// Modulation strength override
    #[arg(long)]
    modulation: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Polymerization,
    Fragmentation,
}

#[derive(Clone, Copy, ValueEnum)]
enum LimitArg {
    Zero,
    Infinity,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one eigenproblem and write the eigenpair
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the eigenvalue over a log-spaced modulation range
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Lower end of the modulation range
        #[arg(long)]
        param_lo: Option<f64>,
        /// Upper end of the modulation range
        #[arg(long)]
        param_hi: Option<f64>,
        /// Number of log-spaced sample points
        #[arg(long)]
        points: Option<usize>,
    },
    /// Check the eigenvalue limit law toward an extreme modulation
    Limits {
        #[command(flatten)]
        common: Common,
        /// Which end of the modulation range to probe
        #[arg(long, value_enum)]
        limit: Option<LimitArg>,
    },
    /// Fit the first-order eigenvalue correction near the critical point
    Expansion {
        #[command(flatten)]
        common: Common,
        /// Declared eigenvalue limit (positive)
        #[arg(long)]
        leading: Option<f64>,
        /// Declared correction coefficient (nonzero)
        #[arg(long)]
        correction: Option<f64>,
        /// Declared correction exponent (positive)
        #[arg(long)]
        correction_exponent: Option<f64>,
    },
    /// Find disease steady states of the monomer-polymer balance
    Prion {
        #[command(flatten)]
        common: Common,
        /// Polymer clearance rate
        #[arg(long)]
        mu0: Option<f64>,
        /// Monomer production rate
        #[arg(long)]
        xi: Option<f64>,
        /// Monomer clearance rate
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Optimize the fragmentation intensity over [1, afrag_max]
    Pmca {
        #[command(flatten)]
        common: Common,
        /// Upper bound on the fragmentation intensity
        #[arg(long)]
        afrag_max: Option<f64>,
        /// Relative tolerance of the interior search
        #[arg(long)]
        rel_tol: Option<f64>,
    },
    /// Check model assumptions without solving
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn build_config(cmd: Cmd) -> (RunConfig, Common) {
    let mut run_overrides = RunSettings::default();
    let (command, common) = match cmd {
        Cmd::Solve { common } => (Command::Solve, common),
        Cmd::Sweep { common, param_lo, param_hi, points } => {
            run_overrides.param_lo = param_lo;
            run_overrides.param_hi = param_hi;
            run_overrides.points = points;
            (Command::Sweep, common)
        }
        Cmd::Limits { common, limit } => {
            run_overrides.limit = limit.map(|l| match l {
                LimitArg::Zero => Limit::Zero,
                LimitArg::Infinity => Limit::Infinity,
            });
            (Command::Limits, common)
        }
        Cmd::Expansion { common, leading, correction, correction_exponent } => {
            run_overrides.leading = leading;
            run_overrides.correction = correction;
            run_overrides.correction_exponent = correction_exponent;
            (Command::Expansion, common)
        }
        Cmd::Prion { common, mu0, xi, delta } => {
            run_overrides.mu0 = mu0;
            run_overrides.xi = xi;
            run_overrides.delta = delta;
            (Command::Prion, common)
        }
        Cmd::Pmca { common, afrag_max, rel_tol } => {
            run_overrides.afrag_max = afrag_max;
            run_overrides.rel_tol = rel_tol;
            (Command::Pmca, common)
        }
        Cmd::Validate { common } => (Command::Validate, common),
    };
    run_overrides.mode = common.mode.map(|m| match m {
        ModeArg::Polymerization => ModulationMode::Polymerization,
        ModeArg::Fragmentation => ModulationMode::Fragmentation,
    });
    run_overrides.modulation = common.modulation;
    let config = RunConfig {
        command,
        problem_path: common.problem.clone(),
        out_dir: common.out.clone(),
        solver_overrides: SolverSettings {
            r: common.r,
            n: common.n,
            dt: common.dt,
            epsilon: common.epsilon,
            max_iters: common.max_iters,
        },
        run_overrides,
    };
    (config, common)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config, _common) = build_config(cli.command);
    match run(&config) {
        Ok(outcome) => {
            for note in &outcome.notes {
                println!("{note}");
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
