//! `ctherm`: batch front end producing figure data and running the checks.

mod commands;
mod grid;
mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collective_thermo::{EnsembleSpec, HalfInt};
use thiserror::Error;

use grid::{parse_beta, parse_finite, Grid};
use table::{Format, Table};

/// Overrides the directory that relative `--out` paths resolve against.
const OUT_DIR_VAR: &str = "CTHERM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "ctherm",
    version,
    about = "Spin-ensemble thermodynamics under collective dissipation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Worker threads for grid points; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Divide energies by ħωns and entropies by n ln(2s+1).
    #[arg(long, global = true)]
    normalize: bool,
}

#[derive(Debug, Clone, Args)]
struct EnsembleArgs {
    /// Number of spins.
    #[arg(long)]
    n: u32,
    /// Spin size: `1/2`, `3/2`, `2` or a decimal such as `1.5`.
    #[arg(long, value_parser = parse_spin)]
    s: HalfInt,
    #[arg(long, default_value_t = 1.0, value_parser = parse_finite)]
    omega: f64,
}

impl EnsembleArgs {
    fn spec(&self) -> Result<EnsembleSpec, CliError> {
        Ok(EnsembleSpec::new(self.n, self.s, self.omega)?)
    }
}

#[derive(Debug, Clone, Args)]
struct CurveArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// Initial inverse temperature; `inf` and `-inf` select the Dicke limit.
    #[arg(long, value_parser = parse_beta, allow_hyphen_values = true)]
    beta0: f64,
    /// Bath inverse temperatures as `start:stop:points[:log]`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Grid,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multiplicities l_J, or level counts I_m with --levels.
    Multiplicities {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long)]
        levels: bool,
    },
    /// Steady and thermal energies against the bath inverse temperature.
    EnergyCurve(CurveArgs),
    /// Steady and thermal entropies against the bath inverse temperature.
    EntropyCurve(CurveArgs),
    /// Free-energy variations and entropy productions of both couplings.
    FreeEnergy(CurveArgs),
    /// Otto-cycle work, heat and enhancement for one cold bath or a sweep.
    Otto {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long, value_parser = parse_beta, allow_hyphen_values = true, default_value = "inf")]
        beta0: f64,
        #[arg(long, value_parser = parse_finite)]
        beta_h: f64,
        #[arg(long, value_parser = parse_finite)]
        lambda: f64,
        #[arg(long, value_parser = parse_finite, conflicts_with = "grid", required_unless_present = "grid")]
        beta_c: Option<f64>,
        /// Cold-bath inverse temperatures as `start:stop:points[:log]`.
        #[arg(long)]
        grid: Option<Grid>,
    },
    /// Block-diagonal time evolution from ρ^th(β₀).
    Dynamics {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long, value_parser = parse_beta, allow_hyphen_values = true)]
        beta0: f64,
        #[arg(long, value_parser = parse_finite, allow_hyphen_values = true)]
        beta_b: f64,
        #[arg(long, default_value_t = 1.0, value_parser = parse_finite)]
        gamma: f64,
        #[arg(long, value_parser = parse_finite)]
        t_final: f64,
        /// Time between recorded rows; only the endpoints by default.
        #[arg(long, value_parser = parse_finite)]
        sample_interval: Option<f64>,
        #[arg(long, value_parser = parse_finite)]
        dt: Option<f64>,
        /// Skip the rerun at dt/2 that confirms the step size.
        #[arg(long)]
        no_step_check: bool,
    },
    /// Compares closed forms with the full-space Lindblad solver.
    OracleCheck {
        /// Largest Hilbert-space dimension to include.
        #[arg(long, default_value_t = 4096)]
        max_dim: usize,
    },
    /// Runs the full consistency suite.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] collective_thermo::Error),
    #[error("output: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use collective_thermo::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Model(E::Domain(_) | E::Resource { .. } | E::Bracket(_)) => 2,
            _ => 1,
        }
    }
}

fn parse_spin(s: &str) -> Result<HalfInt, String> {
    let spin: HalfInt = s.parse().map_err(|e| format!("{e}"))?;
    if spin.twice() < 1 {
        return Err(format!("spin must be positive, got {spin}"));
    }
    Ok(spin)
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn emit(table: &Table, cli: &Cli) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(resolve_out(path))?);
            table.write(&mut w, cli.format)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            let written = table.write(&mut lock, cli.format).and_then(|()| lock.flush());
            match written {
                // a closed downstream pipe (`| head`) is not an error
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cli.jobs)))?;
    let (table, outcome) = pool.install(|| commands::dispatch(&cli.command, cli.normalize))?;
    emit(&table, cli)?;
    outcome
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ctherm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
