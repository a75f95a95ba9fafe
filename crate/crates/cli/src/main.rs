fn main() {
    std::process::exit(baroflux::cli::run_cli(std::env::args_os()));
}
