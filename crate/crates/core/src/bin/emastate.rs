fn main() {
    std::process::exit(emastate::cli::main_with_args(std::env::args_os()));
}
