fn main() {
    std::process::exit(frogcert_cli::run(std::env::args_os()));
}
