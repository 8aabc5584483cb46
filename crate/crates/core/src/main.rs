fn main() {
    std::process::exit(bergman_heat::cli::main_with_args(std::env::args_os()));
}
