use std::process::ExitCode;

use clap::Parser;
use ctc_align::cli::{main_with, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    main_with(Cli::parse())
}
