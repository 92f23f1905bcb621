fn main() {
    std::process::exit(see_core::harness::cli::run(std::env::args_os()));
}
