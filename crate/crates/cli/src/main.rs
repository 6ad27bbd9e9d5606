use clap::Parser;
use rfcsim_cli::{execute, Cli, Command};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => match execute(&args) {
            Ok(summary) => {
                for (m, v) in &summary.rows {
                    println!("{m:<32} {v}");
                }
                0
            }
            Err(e) => {
                eprintln!("rfcsim: {e}");
                e.exit_code()
            }
        },
    };
    std::process::exit(code);
}
