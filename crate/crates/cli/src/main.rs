fn main() {
    std::process::exit(coldcav_cli::run_cli(std::env::args_os()));
}
