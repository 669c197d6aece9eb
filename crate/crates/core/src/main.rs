fn main() {
    std::process::exit(ocm_core::cli::run(std::env::args_os()));
}
