fn main() {
    std::process::exit(detal::cli::run(std::env::args_os()));
}
