fn main() {
    std::process::exit(coevidence::cli::main_with_args(std::env::args_os()));
}
