fn main() {
    std::process::exit(herbprobe::cli::main());
}
