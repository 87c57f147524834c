use std::process::ExitCode;

fn main() -> ExitCode {
    uptick_cli::main_with(std::env::args_os())
}
