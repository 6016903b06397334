fn main() {
    std::process::exit(linkbn_cli::run(std::env::args_os()));
}
