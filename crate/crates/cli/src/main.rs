mod commands;
mod output;
mod run;

use clap::{Args, Parser, Subcommand};
use run::Format;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "fortsim", version, about = "Cavity QED dipole-trap loading simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalOpts,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Run file naming the parameter, FORT, PSD, timing and experiment files.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the run file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; without it artifacts go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ensemble size; overrides the experiment file.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for ensembles (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Probe transmission versus detuning.
    Spectrum(commands::SpectrumOpts),
    /// One transit trajectory and a survey of transit durations.
    Transit(commands::TransitOpts),
    /// Parametric-heating times for the configured trap and PSD.
    Heating(commands::HeatingOpts),
    /// One triggered-loading trial: event log and trial record.
    Protocol(commands::ProtocolOpts),
    /// Survival-versus-delay experiment with background subtraction and fit.
    Lifetime,
    /// Derived quantities of the configuration.
    Params,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli.command, &cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fortsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
