fn main() {
    std::process::exit(chanshort::cli::main_with_args(std::env::args_os()));
}
