fn main() {
    if let Err(e) = genophen::cli::run() {
        eprintln!("error: {e}");
        std::process::exit(genophen::cli::exit_code(&e));
    }
}
