use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = voxcast_cli::Cli::parse();
    match voxcast_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
