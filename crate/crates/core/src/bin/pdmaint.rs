fn main() {
    std::process::exit(pdmaint::cli::run(std::env::args_os()));
}
