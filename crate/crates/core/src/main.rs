fn main() {
    std::process::exit(covrank::cli::run(std::env::args_os()));
}
