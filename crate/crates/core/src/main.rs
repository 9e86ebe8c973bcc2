fn main() {
    std::process::exit(keynerf::cli::main());
}
