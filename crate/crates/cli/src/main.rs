use std::process::ExitCode;

use clap::Parser;
use neurosiren_cli::{init_logging, run, Cli};

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    ExitCode::from(run(&cli))
}
