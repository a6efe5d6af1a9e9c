fn main() {
    std::process::exit(gapsparse::cli::cli(std::env::args_os()));
}
