fn main() {
    std::process::exit(torquegap_cli::run(std::env::args_os()));
}
