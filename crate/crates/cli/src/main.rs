fn main() {
    std::process::exit(fpp_cli::run(std::env::args().collect()));
}
