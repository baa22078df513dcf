fn main() {
    std::process::exit(atomscan::cli::main_with_args(std::env::args_os()));
}
