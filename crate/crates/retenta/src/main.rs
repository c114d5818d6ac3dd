fn main() {
    std::process::exit(retenta::cli::cli_dispatch(std::env::args()));
}
