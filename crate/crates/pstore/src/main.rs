fn main() {
    std::process::exit(pstore::cli::run_cli(std::env::args_os()));
}
