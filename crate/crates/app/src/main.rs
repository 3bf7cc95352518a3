use std::process::ExitCode;

use clap::Parser;
use krew_app::bench::TrackingAllocator;
use krew_app::cli::{run, Cli};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

fn main() -> ExitCode {
    // usage errors exit with status 2 inside `parse`
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
