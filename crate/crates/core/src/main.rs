use clap::Parser;
use sobolev_lab::cli::{run, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            for line in &report.stdout {
                println!("{line}");
            }
            for n in &report.notices {
                eprintln!("note: {n}");
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("FAIL");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
