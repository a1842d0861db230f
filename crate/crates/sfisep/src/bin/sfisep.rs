fn main() {
    std::process::exit(sfisep::cli::run(std::env::args_os()));
}
