fn main() {
    std::process::exit(chordmc_cli::run_from_env());
}
