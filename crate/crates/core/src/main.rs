fn main() {
    symcheck::cli::init_logging();
    let stdin = std::io::stdin();
    let code = symcheck::cli::run(std::env::args_os(), &mut stdin.lock(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
