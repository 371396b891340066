fn main() {
    std::process::exit(multihom::cli::main());
}
