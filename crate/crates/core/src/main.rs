fn main() {
    std::process::exit(qtrade::cli::run(std::env::args_os()));
}
