use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match sorag_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version displays are not errors; everything else
            // is a usage problem and exits with the documented code.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => sorag_cli::EXIT_USAGE,
            };
            err.print().expect("clap writes to stdout or stderr");
            std::process::exit(code);
        }
    };
    std::process::exit(sorag_cli::run(cli));
}
