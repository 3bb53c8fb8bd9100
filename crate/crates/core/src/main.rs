use std::process::ExitCode;

use clap::Parser;
use gtd::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) if manifest.failures == 0 => ExitCode::SUCCESS,
        Ok(manifest) => {
            eprintln!(
                "gtd: {} item(s) failed; see {}",
                manifest.failures,
                manifest.config.out.display()
            );
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("gtd: {e}");
            ExitCode::from(2)
        }
    }
}
