use std::process::ExitCode;

use clap::Parser;
use latdd_cli::commands::{run, Cli};
use latdd_cli::record::append;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(out) => {
            if cli.json {
                for r in &out.records {
                    println!("{}", r.to_line());
                }
            } else {
                print!("{}", out.text);
            }
            match cli.record.as_ref().or(out.record_to.as_ref()).map(|p| append(p, &out.records)) {
                Some(Err(e)) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
                _ => out.exit,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
