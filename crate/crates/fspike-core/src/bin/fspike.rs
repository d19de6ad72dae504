fn main() {
    std::process::exit(fspike_core::cli::run(std::env::args_os()));
}
