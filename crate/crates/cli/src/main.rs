fn main() {
    std::process::exit(mixedness_cli::run_cli(std::env::args_os()));
}
