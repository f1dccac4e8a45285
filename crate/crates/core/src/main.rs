fn main() {
    std::process::exit(mfdgp::cli::run_cli(std::env::args_os()));
}
