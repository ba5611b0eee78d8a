fn main() {
    std::process::exit(lpm_cli::app::run(std::env::args_os()));
}
