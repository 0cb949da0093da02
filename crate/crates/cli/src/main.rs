use std::process::ExitCode;

use clap::Parser;
use klsurv_cli::{init_thread_pool, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_thread_pool().and_then(|()| run(cli)) {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
