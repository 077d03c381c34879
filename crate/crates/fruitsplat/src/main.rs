use std::process::ExitCode;

fn main() -> ExitCode {
    fruitsplat::cli::run()
}
