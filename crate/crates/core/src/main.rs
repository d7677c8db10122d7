fn main() {
    std::process::exit(richkde::cli::run(std::env::args_os()));
}
