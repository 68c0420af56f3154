fn main() {
    std::process::exit(cgpt_eit::cli::main_with_args(std::env::args_os()));
}
