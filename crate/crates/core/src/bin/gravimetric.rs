fn main() {
    let code = gravimetric::cli::main_with_args(std::env::args().collect());
    std::process::exit(code);
}
