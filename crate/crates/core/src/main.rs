use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(viscoflow::cli::main_with_args(std::env::args_os()))
}
