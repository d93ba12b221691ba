use std::process::ExitCode;

fn main() -> ExitCode {
    srcond::cli::main_with_args(std::env::args_os())
}
