fn main() {
    std::process::exit(mfpid::cli::main());
}
