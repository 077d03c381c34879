//! Command-line pipeline (placeholder during bring-up).

use std::process::ExitCode;

pub fn run() -> ExitCode {
    ExitCode::SUCCESS
}
