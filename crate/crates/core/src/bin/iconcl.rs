fn main() {
    std::process::exit(iconcl::cli::run(std::env::args_os()));
}
