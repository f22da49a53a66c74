fn main() {
    std::process::exit(richaccel::cli::run_cli(std::env::args_os()));
}
