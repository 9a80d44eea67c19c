fn main() {
    std::process::exit(grbm_cli::run_from(std::env::args_os()));
}
