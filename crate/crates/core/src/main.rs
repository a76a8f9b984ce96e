fn main() {
    std::process::exit(gentrans::cli::main_with_args(std::env::args_os()));
}
