fn main() {
    std::process::exit(extdiv::cli::main_with_args(std::env::args_os()));
}
