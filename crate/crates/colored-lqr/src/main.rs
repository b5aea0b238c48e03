fn main() {
    std::process::exit(colored_lqr::cli::run(std::env::args_os()));
}
