fn main() {
    std::process::exit(nls_cli::run_cli(std::env::args_os()));
}
