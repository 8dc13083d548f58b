fn main() {
    let code = faup::cli::run(std::env::args_os());
    std::process::exit(code);
}
