fn main() {
    std::process::exit(nmot_cli::run_cli(std::env::args()));
}
