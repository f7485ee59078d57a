fn main() {
    std::process::exit(koopmourre_cli::run(std::env::args_os()));
}
