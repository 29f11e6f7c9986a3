fn main() {
    std::process::exit(diffsteg_cli::run(std::env::args_os()));
}
