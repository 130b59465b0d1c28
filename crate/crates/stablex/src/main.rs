fn main() {
    std::process::exit(stablex::cli::run(std::env::args_os()));
}
