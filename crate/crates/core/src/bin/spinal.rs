use std::process::ExitCode;

fn main() -> ExitCode {
    spinal::cli::main_with_args(std::env::args_os())
}
