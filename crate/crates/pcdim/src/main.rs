fn main() {
    std::process::exit(pcdim::cli::run(std::env::args_os()));
}
