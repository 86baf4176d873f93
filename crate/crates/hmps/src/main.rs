fn main() {
    std::process::exit(hmps::cli::main_with_args(std::env::args_os()));
}
