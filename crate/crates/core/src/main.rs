fn main() {
    std::process::exit(remkit::cli::run_from(std::env::args_os()));
}
