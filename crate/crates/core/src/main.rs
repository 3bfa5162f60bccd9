fn main() {
    std::process::exit(nestfactor::cli::main_with_args(std::env::args_os()));
}
