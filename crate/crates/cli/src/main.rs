fn main() {
    std::process::exit(mlfti_cli::main_with_args(std::env::args_os()));
}
