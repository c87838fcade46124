use std::process::ExitCode;

fn main() -> ExitCode {
    decor::cli::run_main()
}
