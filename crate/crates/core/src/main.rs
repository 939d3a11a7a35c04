use std::process::ExitCode;

use clap::Parser;
use holewire::cli::{run, Cli};
use holewire::Error;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let msg = msg.trim().trim_start_matches("error: ").replace('\n', " ");
            fail(&Error::Config(msg))
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ! {
    eprintln!("error code={} kind={}: {e}", e.exit_code(), e.kind());
    std::process::exit(e.exit_code())
}
