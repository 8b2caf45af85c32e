fn main() {
    std::process::exit(mtle::cli::run(std::env::args_os()));
}
