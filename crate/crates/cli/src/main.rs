use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use nars_cli::{run, Manifest};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NARS_LOG", "error")).init();
    let manifest = match Manifest::try_parse() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&manifest) {
        Ok(summary) => {
            let mut stdout = std::io::stdout().lock();
            for (name, value) in summary {
                let _ = writeln!(stdout, "{name}: {value}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
