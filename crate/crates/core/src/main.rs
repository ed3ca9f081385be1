fn main() {
    std::process::exit(spikenoc::cli::main_with_args(std::env::args_os()));
}
