fn main() {
    std::process::exit(dgn::cli::main());
}
