fn main() {
    std::process::exit(huber_rrr::cli::main_with_args(std::env::args_os()));
}
