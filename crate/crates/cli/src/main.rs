use clap::Parser;
use ionshelf_cli::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            std::process::exit(e.exit_code());
        }
    }
}
