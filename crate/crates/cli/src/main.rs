fn main() {
    std::process::exit(pacile_cli::main_with_args(std::env::args_os()));
}
