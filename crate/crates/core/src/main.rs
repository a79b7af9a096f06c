fn main() {
    std::process::exit(lfq_core::cli::main());
}
