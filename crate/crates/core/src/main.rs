use std::process::ExitCode;

use clap::Parser;
use rotbox::cli::{configure_threads, run, RunConfig};

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    let stdout = std::io::stdout();
    let result = configure_threads().and_then(|()| run(&cfg, &mut stdout.lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rotbox: {e}");
            ExitCode::FAILURE
        }
    }
}
