use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cutgraph::cli::run())
}
