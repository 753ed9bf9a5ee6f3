fn main() {
    std::process::exit(segqc::cli::main());
}
