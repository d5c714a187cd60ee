//! Casimir-Polder surface-potential toolkit.
//!
//! Subcommands compute coated-surface reflection spectra, per-state surface
//! potentials, the predicted lattice-site transition shift, and fit measured
//! spectra. Set CPSURF_THREADS to bound the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cpsurf::cli::{cmd_coating, cmd_cp_curve, cmd_fit, cmd_predict, Overrides, Setup};
use cpsurf::cpcore::Regime;
use cpsurf::specfit::FitModel;

#[derive(Parser)]
#[command(
    name = "cpsurf",
    version,
    about = "Surface potentials, lattice bound states and spectrum fits for atoms near a coated surface"
)]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Potential regime override: full, short or long.
    #[arg(long, global = true)]
    regime: Option<String>,

    /// Relative quadrature tolerance override.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-state surface-potential curves and the differential shift curve.
    CpCurve,
    /// Coating reflectance/phase spectra and the thickness-tolerance Monte Carlo.
    Coating,
    /// Three-regime transition-shift prediction and trap observables.
    Predict,
    /// Fit a spectrum, sideband scan or calibration data set.
    Fit {
        /// Input data file.
        #[arg(long)]
        data: PathBuf,
        /// Model: single_voigt, double_voigt, double_voigt_dips, gaussian, linear.
        #[arg(long)]
        model: String,
    },
}

fn run() -> cpsurf::Result<()> {
    let cli = Cli::parse();

    if let Ok(threads) = std::env::var("CPSURF_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let regime = cli.regime.as_deref().map(Regime::parse).transpose()?;
    let overrides = Overrides {
        seed: cli.seed,
        regime,
        rel_tol: cli.tolerance,
    };
    let setup = Setup::resolve(&cli.config, &overrides)?;
    let files = match &cli.command {
        Command::CpCurve => cmd_cp_curve(&setup, &cli.out)?,
        Command::Coating => cmd_coating(&setup, &cli.out)?,
        Command::Predict => cmd_predict(&setup, &cli.out)?,
        Command::Fit { data, model } => {
            let model = FitModel::parse(model)?;
            cmd_fit(&setup, data, model, &cli.out)?
        }
    };
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
