fn main() {
    std::process::exit(paad::cli::main());
}
