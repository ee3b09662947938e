use std::process::ExitCode;

fn main() -> ExitCode {
    poddl::cli::main_with(std::env::args_os())
}
