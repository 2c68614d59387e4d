fn main() {
    std::process::exit(segpart::cli::main_with_args(std::env::args_os()));
}
