fn main() {
    std::process::exit(vortexberry::cli::main_with_args(std::env::args_os()));
}
