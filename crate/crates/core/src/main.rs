fn main() {
    std::process::exit(confquant::cli::run_from(std::env::args_os()));
}
