fn main() {
    std::process::exit(rmlearn::cli::run(std::env::args_os()));
}
