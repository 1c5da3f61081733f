use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = adtplan_cli::Cli::parse();
    if let Err(e) = adtplan_cli::run(cli) {
        eprintln!("adtplan: {e}");
        std::process::exit(e.exit_code());
    }
}
