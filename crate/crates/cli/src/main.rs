fn main() {
    std::process::exit(kacq_cli::run(std::env::args_os()));
}
