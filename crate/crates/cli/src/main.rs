fn main() {
    std::process::exit(cbf_cli::run(std::env::args_os()));
}
