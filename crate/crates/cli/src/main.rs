mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use output::{CliError, CliResult, RunManifest, EXIT_USAGE};

fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    let path = cli.command.model_path();
    let bytes = commands::model_bytes(path)?;
    let report = match &cli.command {
        Command::Validate(_) => commands::validate(&bytes)?,
        command => {
            let model = commands::load_model(&bytes)?;
            match command {
                Command::Stability(a) => commands::stability(&model, a)?,
                Command::Fluid(a) => commands::fluid(&model, a)?,
                Command::Lst(a) => commands::lst(&model, a)?,
                Command::Branching(a) => commands::branching(&model, a)?,
                Command::Simulate(a) => commands::simulate(&model, a)?,
                Command::Tail(a) => commands::tail(&model, a)?,
                Command::Validate(_) => unreachable!(),
            }
        }
    };
    let manifest = RunManifest::new(cli.command.name(), argv, path, &bytes, cli.command.seed());
    output::emit(&report, cli.format, cli.output_dir.as_deref(), manifest)?;
    report.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csq: {e}");
            ExitCode::from(CliError::exit_code(&e))
        }
    }
}
