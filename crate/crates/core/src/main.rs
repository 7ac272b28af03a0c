use std::process::ExitCode;

use lcpaths::cli::{parse_config, run, threads_from_env, with_threads, CliError};

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Info(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lcpaths: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn try_main() -> Result<(), CliError> {
    let cfg = parse_config(std::env::args_os())?;
    with_threads(threads_from_env()?, || run(&cfg))??;
    Ok(())
}
