use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match qjump::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match qjump::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qjump: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
