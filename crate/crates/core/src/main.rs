fn main() {
    std::process::exit(define_core::cli::run(std::env::args_os()));
}
