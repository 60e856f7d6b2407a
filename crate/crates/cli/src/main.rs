use clap::Parser;

fn main() {
    let cli = match ascnet_cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", ascnet_cli::CliError::Config(first.to_string()));
            std::process::exit(2);
        }
    };
    if let Err(e) = ascnet_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
