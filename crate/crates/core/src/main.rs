fn main() {
    std::process::exit(topspan::cli::main());
}
