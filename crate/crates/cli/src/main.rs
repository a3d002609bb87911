fn main() {
    std::process::exit(qlkink_cli::run(std::env::args_os()));
}
