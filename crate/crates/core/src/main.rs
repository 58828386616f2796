fn main() {
    std::process::exit(lps::cli::parse_and_dispatch(std::env::args_os()));
}
