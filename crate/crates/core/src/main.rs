use std::process::ExitCode;

use aomsim::cli::{command, dispatch, error_json, resolve};

fn main() -> ExitCode {
    let matches = command().get_matches();
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let result = resolve(&matches, |k| std::env::var(k).ok()).and_then(|cfg| dispatch(name, sub, &cfg));
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string(&outcome).expect("outcome serialises"));
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("{name}: one or more checks failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            println!("{}", error_json(&e));
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
