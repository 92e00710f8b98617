mod commands;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qhier_core::report::Tolerances;
use qhier_core::Error;

/// Hamiltonization, second quantization and eclectic reduction of k-local models.
#[derive(Debug, Parser)]
#[command(name = "qhier", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for every random draw; sub-streams are derived per use.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Override a check tolerance, e.g. `--tol quantum_jacobi=1e-12`. Repeatable.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE", value_parser = parse_tol)]
    pub tol: Vec<(String, f64)>,
    /// Largest dense dimension any command may build (at least 4).
    #[arg(long, global = true)]
    pub cap: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LayoutArg::Padded)]
    pub layout: LayoutArg,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Padded,
    Directsum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an HSPEC file and print its locality classes.
    Parse { file: PathBuf },
    /// Run invariant suites: phase, fock, hierarchy, eclectic, open or all.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Also check the energy identity on this model (HSPEC path or builtin).
        #[arg(long)]
        model: Option<String>,
    },
    /// Energy identity of the eclectic system and its dimension table.
    Eclectic {
        /// HSPEC path or builtin (`heisenberg:N`, `ring:N`).
        model: String,
        /// `random`, `random:SEED`, `groundstate` or `file:PATH`.
        #[arg(long, default_value = "random")]
        state: String,
        /// Number of random states.
        #[arg(long, default_value_t = 1)]
        states: usize,
        /// Skip the energy identity and report dimensions only.
        #[arg(long)]
        dims_only: bool,
        /// Add a Heisenberg-chain dimension sweep, e.g. `2..14`.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Worked hierarchy examples.
    Hierarchy {
        #[arg(value_enum)]
        example: Example,
        /// `N_tot` of the first bosonic lift.
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        /// Coefficients `v0,v1,..` of `V(x)`, degree at most 4.
        #[arg(long, default_value = "0,0,1,0,0.5", allow_hyphen_values = true)]
        potential: String,
        #[arg(long, value_enum, default_value_t = OrderingArg::Weyl)]
        ordering: OrderingArg,
    },
    /// Time evolution as CSV (or JSON).
    Evolve(EvolveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Example {
    Oscillator,
    Potential,
    Qubit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Weyl,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Exact,
    Symplectic,
    Lindblad,
    Sse,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// HSPEC path or builtin (`oscillator:W`, `qubit`, `damping:G`, `heisenberg:N`, `ring:N`).
    pub model: String,
    #[arg(long, value_enum, default_value_t = Engine::Exact)]
    pub engine: Engine,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Rows after the initial one.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// `random`, `random:SEED`, `basis:I` or `file:PATH`.
    #[arg(long)]
    pub init: Option<String>,
    /// Decay rate of `|0><1|` on every site of a qubit model.
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub n_traj: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Midpoint)]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Midpoint,
    Leapfrog,
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let v: f64 = value.trim().parse().map_err(|e| format!("bad tolerance {value:?}: {e}"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("tolerance for {name} must be positive"));
    }
    Ok((name.trim().to_string(), v))
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CheckFailed = 1,
    Usage = 2,
    Resource = 3,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::CheckFailed
        }
    }
}

pub fn error_status(e: &Error) -> Status {
    match e {
        Error::Resource { .. } => Status::Resource,
        Error::Numeric(_) => Status::CheckFailed,
        Error::Argument(_) | Error::Validation(_) | Error::Unsupported(_) | Error::Parse(_) => Status::Usage,
    }
}

fn configure_cap(flag: Option<usize>) -> Result<(), Error> {
    let env = match std::env::var("QHIER_CAP") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Error::Argument(format!("QHIER_CAP={v:?} is not an integer")))?),
        Err(_) => None,
    };
    if let Some(cap) = flag.or(env) {
        if cap < 4 {
            return Err(Error::Argument(format!("dimension cap {cap} is below the minimum of 4")));
        }
        qhier_core::hilbert::set_dim_cap(cap);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match run(&cli) {
        Ok(s) => s,
        Err(e) => {
            report_error(&e);
            error_status(&e)
        }
    };
    ExitCode::from(status as u8)
}

pub fn report_error(e: &Error) {
    match e {
        Error::Parse(diags) => {
            for d in diags {
                eprintln!("error: {d}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn run(cli: &Cli) -> Result<Status, Error> {
    configure_cap(cli.global.cap)?;
    let mut tol = Tolerances::new();
    for (name, v) in &cli.global.tol {
        tol.set(name.clone(), *v);
    }
    match &cli.command {
        Command::Parse { file } => commands::parse(&cli.global, file),
        Command::Verify { suite, model } => commands::verify(&cli.global, &tol, suite, model.as_deref()),
        Command::Eclectic { model, state, states, dims_only, sweep } => {
            commands::eclectic(&cli.global, &tol, model, state, *states, *dims_only, sweep.as_deref())
        }
        Command::Hierarchy { example, cutoff, omega, potential, ordering } => {
            commands::hierarchy(&cli.global, &tol, *example, *cutoff, *omega, potential, *ordering)
        }
        Command::Evolve(args) => commands::evolve(&cli.global, args),
    }
}
