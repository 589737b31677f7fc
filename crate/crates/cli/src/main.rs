fn main() {
    std::process::exit(stn_cli::run_cli(std::env::args_os()));
}
