fn main() {
    std::process::exit(embcat::cli::main_with_args(std::env::args_os()));
}
