fn main() {
    std::process::exit(lika_cli::parse_and_dispatch(std::env::args_os()));
}
