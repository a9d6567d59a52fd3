use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = oist_cli::Cli::parse();
    match oist_cli::run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("oist {}: {e}", cli.command.name());
            std::process::exit(e.exit_code());
        }
    }
}
