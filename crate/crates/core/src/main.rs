use clap::Parser;

use nprg_flow::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(written) => {
            for path in &written.paths {
                eprintln!("wrote {}", path.display());
            }
            match serde_json::to_string_pretty(&written.document["result"]) {
                Ok(text) => println!("{text}"),
                Err(e) => eprintln!("error: {e}"),
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}
