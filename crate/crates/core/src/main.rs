fn main() {
    std::process::exit(unipoint::cli::run());
}
