fn main() {
    std::process::exit(mter_cli::run(std::env::args_os()));
}
