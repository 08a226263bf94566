use clap::Parser;
use drawstat::config::{Cli, Command, Pipeline, RunConfig};
use drawstat::{pipeline, CliError};
use drawstat_core::synth::{generate, SynthSpec};
use std::process::ExitCode;
use std::time::Instant;

fn execute(cli: Cli) -> Result<(), CliError> {
    let (args, pipelines) = match cli.command {
        Command::Gravity(a) => (a, vec![Pipeline::Gravity]),
        Command::Colors(a) => (a, vec![Pipeline::Colors]),
        Command::Palette(a) => (a, vec![Pipeline::Palette]),
        Command::Complexity(a) => (a, vec![Pipeline::Complexity]),
        Command::Stats(a) => (a, vec![Pipeline::Stats]),
        Command::RunAll(a) => (a, Pipeline::ALL.to_vec()),
        Command::Synth(s) => {
            let out = generate(&SynthSpec::bundled(s.seed), &s.out).map_err(|e| CliError::Pipeline(e.to_string()))?;
            println!("{}", out.manifest.display());
            return Ok(());
        }
    };
    let cfg = RunConfig::resolve(&args, pipelines)?;
    let start = Instant::now();
    let result = pipeline::run(&cfg)?;
    eprintln!(
        "{} drawings, {} skip entries, {:.1}s -> {}",
        result.outcomes.len(),
        result.skipped.len(),
        start.elapsed().as_secs_f64(),
        cfg.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
