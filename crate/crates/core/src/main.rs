fn main() {
    std::process::exit(frailty::cli::main_with_args(std::env::args_os()));
}
