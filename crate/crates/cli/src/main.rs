fn main() {
    std::process::exit(babnd_cli::run(std::env::args_os()));
}
