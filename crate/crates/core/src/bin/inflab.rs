fn main() {
    std::process::exit(inflab::cli::main_with_args(std::env::args_os()));
}
