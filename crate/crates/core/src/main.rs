fn main() {
    std::process::exit(ntfkit::cli::run());
}
