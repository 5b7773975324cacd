use std::process::ExitCode;

use clap::Parser;
use halfspace_cli::{run, Cli, RunConfig, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let cfg = RunConfig::from(cli);
    match run(&cfg) {
        Ok(out) => {
            if cfg.out.is_none() {
                print!("{}", out.text);
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
