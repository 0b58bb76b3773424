fn main() {
    std::process::exit(tcbd::cli::run());
}
