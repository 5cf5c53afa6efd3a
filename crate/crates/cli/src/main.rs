use std::process::ExitCode;

use hsk_cli::RunError;

fn main() -> ExitCode {
    let Err(err) = hsk_cli::run_args(std::env::args_os()) else {
        return ExitCode::SUCCESS;
    };
    let code = err.exit_code();
    match err {
        RunError::Clap(e) => {
            let _ = e.print();
        }
        other => eprintln!("{other}"),
    }
    ExitCode::from(code as u8)
}
