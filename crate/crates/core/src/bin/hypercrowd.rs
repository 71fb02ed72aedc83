fn main() {
    std::process::exit(hypercrowd::cli::main_with_args(std::env::args_os()));
}
