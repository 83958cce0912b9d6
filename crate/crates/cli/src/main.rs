fn main() {
    std::process::exit(boostedprob_cli::run(std::env::args_os()));
}
