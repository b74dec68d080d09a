fn main() {
    let code = relay_tree::cli::run(std::env::args_os());
    std::process::exit(code);
}
