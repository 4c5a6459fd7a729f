fn main() {
    std::process::exit(clirkit::cli::main());
}
