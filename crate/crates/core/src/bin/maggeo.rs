fn main() {
    std::process::exit(magnetic_geodesics::cli::main_with_args(std::env::args_os()));
}
