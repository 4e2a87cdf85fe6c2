use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(qkin::cli::run(std::env::args_os()))
}
