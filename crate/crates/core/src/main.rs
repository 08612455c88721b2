use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PO2FORGE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = <po2forge::cli::Cli as clap::Parser>::parse();
    match po2forge::cli::execute(&cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
