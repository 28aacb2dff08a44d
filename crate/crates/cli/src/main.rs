fn main() {
    std::process::exit(rmpnav_cli::run(std::env::args_os()));
}
