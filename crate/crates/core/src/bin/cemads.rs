fn main() {
    std::process::exit(cemads::cli::main_with_args(std::env::args_os()));
}
