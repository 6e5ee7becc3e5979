fn main() {
    std::process::exit(fpld_cli::main_with_args(std::env::args_os()));
}
