fn main() {
    std::process::exit(prcm_cli::main_with_args(std::env::args_os()));
}
