fn main() {
    std::process::exit(bargain::cli::run());
}
