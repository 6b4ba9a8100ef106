use std::process::ExitCode;

use sbm_cli::{emit, parse_args, CliError};

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command.run() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emit(&outcome, cli.command.out().map(|p| p.as_path())) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let failures = outcome.failures();
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        let list = serde_json::json!({ "failures": failures });
        eprintln!("{list}");
        ExitCode::from(1)
    }
}
