//! Command-line front end: `simulate`, `montecarlo`, `tightening-compare`,
//! `gains` and `dump-config`.
//!
//! Exit status is 0 on success, 2 for configuration, domain or I/O errors
//! and 3 for synthesis or solver failures. No output file is written when a
//! command fails.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::chance::{cantelli_gamma, gaussian_gamma, RiskParameter};
use crate::controller::ControllerMode;
use crate::error::{config_err, Error, Result};
use crate::experiment::{linear_grid, run_campaign, tightening_comparison};
use crate::synthesis::{lqr_gain, propagate_covariance};

pub use config::{RunConfig, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "smpc", version, about = "Stochastic MPC with chance-constraint tightening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML run configuration; the built-in reference scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed loop and write its trajectory.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// nominal-free, nominal, smpc-gaussian or smpc-cantelli.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run many trials and write summary and per-trial CSVs.
    Montecarlo {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        /// Seed of trial 0; trial i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the Gaussian and Cantelli tightening factors.
    TighteningCompare {
        #[arg(long, default_value_t = 0.5)]
        pmin: f64,
        #[arg(long, default_value_t = 0.99)]
        pmax: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Output CSV file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the LQR gain, closed-loop matrix and margin schedule.
    Gains {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Print the effective configuration as TOML.
    DumpConfig {
        #[command(flatten)]
        config: ConfigArg,
    },
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Io(_) => EXIT_CONFIG,
        Error::Synthesis { .. } | Error::Solver(_) => EXIT_SOLVER,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return if code == 0 { EXIT_OK } else { EXIT_CONFIG };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load(arg: &ConfigArg) -> Result<(RunConfig, Scenario, String)> {
    let config = match &arg.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let scenario = config.to_scenario()?;
    let hash = config.hash()?;
    Ok((config, scenario, hash))
}

fn resolve_mode(mode: Option<&str>, scenario: &Scenario) -> Result<ControllerMode> {
    match mode {
        Some(m) => m.parse(),
        None => Ok(scenario.default_mode()),
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate { config, mode, seed, out } => {
            let (_, scenario, hash) = load(&config)?;
            let mode = resolve_mode(mode.as_deref(), &scenario)?;
            let seed = seed.unwrap_or(scenario.base_seed);
            let record = scenario.setup(mode)?.run(&scenario.x0, scenario.steps, seed)?;
            let header = output::header_line(Some(&hash), Some(seed), Some(mode.name()));
            let text = output::trajectory_csv(&header, &record, scenario.dt)?;
            let path = out.unwrap_or_else(|| default_path(&scenario, mode, "trajectory"));
            output::write_file(&path, &text)?;
            writeln!(stdout, "wrote {}", path.display())?;
        }
        Command::Montecarlo { config, mode, trials, seed, out } => {
            let (_, scenario, hash) = load(&config)?;
            let mode = resolve_mode(mode.as_deref(), &scenario)?;
            let trials = trials.unwrap_or(scenario.trials);
            if trials == 0 {
                return config_err("--trials must be at least 1");
            }
            let seed = seed.unwrap_or(scenario.base_seed);
            let result = run_campaign(&scenario.setup(mode)?, &scenario.x0, scenario.steps, trials, seed)?;
            let header = output::header_line(Some(&hash), Some(seed), Some(mode.name()));
            let summary = output::summary_csv(&header, &result, scenario.risk().value())?;
            let long = output::trials_csv(&header, &result)?;
            let dir = out.unwrap_or_else(|| scenario.output_directory.clone());
            let stem = format!("{}_{}", scenario.output_prefix, mode.name());
            let summary_path = dir.join(format!("{stem}_summary.csv"));
            let trials_path = dir.join(format!("{stem}_trials.csv"));
            output::write_file(&summary_path, &summary)?;
            output::write_file(&trials_path, &long)?;
            writeln!(
                stdout,
                "{}: rate {:.6} (se {:.6}), at-risk rate {:.6} over {} steps",
                mode, result.overall.rate, result.overall.standard_error, result.at_risk.rate, result.at_risk.samples
            )?;
            writeln!(stdout, "wrote {} and {}", summary_path.display(), trials_path.display())?;
        }
        Command::TighteningCompare { pmin, pmax, points, out } => {
            if pmax >= 1.0 {
                return Err(Error::Domain(format!("pmax must be below 1, got {pmax}")));
            }
            let rows = tightening_comparison(&linear_grid(pmin, pmax, points)?)?;
            let text = output::tightening_csv(&output::header_line(None, None, None), &rows)?;
            match out {
                Some(path) => {
                    output::write_file(&path, &text)?;
                    writeln!(stdout, "wrote {}", path.display())?;
                }
                None => stdout.write_all(text.as_bytes())?,
            }
        }
        Command::Gains { config } => {
            let (_, scenario, _) = load(&config)?;
            write_gains(&scenario, stdout)?;
        }
        Command::DumpConfig { config } => {
            let (_, scenario, _) = load(&config)?;
            stdout.write_all(scenario.to_config().to_toml_string()?.as_bytes())?;
        }
    }
    Ok(())
}

fn default_path(scenario: &Scenario, mode: ControllerMode, kind: &str) -> PathBuf {
    Path::new(&scenario.output_directory).join(format!("{}_{}_{kind}.csv", scenario.output_prefix, mode.name()))
}

fn format_row(values: impl Iterator<Item = f64>) -> String {
    let cells: Vec<String> = values.map(|v| format!("{v:>12.6}")).collect();
    format!("[{} ]", cells.join(""))
}

fn write_gains(scenario: &Scenario, out: &mut dyn Write) -> Result<()> {
    let settings = &scenario.settings;
    let lqr_q = settings.lqr_q.as_ref().unwrap_or(&settings.q);
    let lqr_r = settings.lqr_r.as_ref().unwrap_or(&settings.r);
    let synth = match &settings.gain_override {
        Some(k) => crate::synthesis::FeedbackSynthesis::with_gain(
            scenario.system.a(),
            scenario.system.b(),
            k.clone(),
            lqr_q.clone(),
            lqr_r.clone(),
        )?,
        None => lqr_gain(scenario.system.a(), scenario.system.b(), lqr_q, lqr_r)?,
    };
    writeln!(out, "K (u = -K x + v)")?;
    for row in synth.k.row_iter() {
        writeln!(out, "  {}", format_row(row.iter().copied()))?;
    }
    writeln!(out, "Phi = A - B K")?;
    for row in synth.phi.row_iter() {
        writeln!(out, "  {}", format_row(row.iter().copied()))?;
    }
    writeln!(out, "spectral radius of Phi: {:.9}", synth.spectral_radius())?;

    let cov = propagate_covariance(&synth.phi, scenario.system.d(), scenario.system.sigma_w(), settings.horizon)?;
    let risk: RiskParameter = scenario.risk();
    for (i, hs) in scenario.constraints.state_halfspaces().iter().enumerate() {
        writeln!(out, "half-space {} (h = {}), p = {}", i + 1, hs.h, risk.value())?;
        writeln!(out, "{:>4} {:>14} {:>14} {:>14}", "k", "gT Sigma g", "gamma_gauss", "gamma_cantelli")?;
        for (k, sigma) in cov.sigmas.iter().enumerate().skip(1) {
            let variance = (hs.g.transpose() * sigma * &hs.g)[(0, 0)];
            let gauss = match gaussian_gamma(&hs.g, sigma, risk) {
                Ok(g) => format!("{g:>14.6}"),
                Err(_) => format!("{:>14}", "n/a"),
            };
            let cantelli = cantelli_gamma(variance.max(0.0).sqrt(), risk)?;
            writeln!(out, "{k:>4} {variance:>14.6} {gauss} {cantelli:>14.6}")?;
        }
    }
    Ok(())
}

impl From<std::fmt::Error> for Error {
    fn from(e: std::fmt::Error) -> Self {
        Error::Io(e.to_string())
    }
}
