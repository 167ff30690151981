fn main() {
    std::process::exit(greenpow::cli::main_with_args(std::env::args_os()));
}
