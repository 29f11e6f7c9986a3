//! Usage: cargo run -p diffsteg-cli --example write_toy_assets -- [DIR]
//!
//! DIR defaults to `assets/toy`.

use std::path::PathBuf;

fn main() {
    let dir = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("assets/toy"));
    match diffsteg_cli::toy_assets::write(&dir) {
        Ok(config) => println!("wrote {}", config.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
