fn main() {
    std::process::exit(hybrid_rdme::cli::main_with_args(std::env::args_os()));
}
