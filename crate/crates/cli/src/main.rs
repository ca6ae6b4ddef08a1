use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args: Vec<std::ffi::OsString> = std::env::args_os().collect();
    // logging is configured from flags only
    let verbose = crackseg_cli::Cli::try_parse_from(&args).is_ok_and(|c| c.verbose);
    env_logger::Builder::new()
        .filter_level(if verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    let result = crackseg_cli::main_with_args(args);
    ExitCode::from(result.exit_code as u8)
}
