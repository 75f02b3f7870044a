fn main() {
    std::process::exit(ndp_cli::run(std::env::args_os()));
}
