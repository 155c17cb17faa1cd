fn main() {
    std::process::exit(nlsmod_cli::run(std::env::args_os()));
}
