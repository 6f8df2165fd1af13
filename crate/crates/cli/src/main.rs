use std::process::ExitCode;

use clap::Parser;
use tubalsr_cli::error::CliError;
use tubalsr_cli::{configure_threads, run, Cli};

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.report()).expect("report serializes"));
    ExitCode::from(e.code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.render().to_string().trim().to_string())),
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    match run(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
