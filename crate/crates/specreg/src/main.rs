fn main() {
    std::process::exit(specreg::cli::main_with_args(std::env::args_os()));
}
