fn main() {
    std::process::exit(casimir_cli::dispatch(std::env::args_os()));
}
