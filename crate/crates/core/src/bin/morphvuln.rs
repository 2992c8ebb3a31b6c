fn main() {
    std::process::exit(morphvuln::cli::run_from(std::env::args_os()));
}
