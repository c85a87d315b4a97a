fn main() {
    std::process::exit(coxkit_cli::run(std::env::args_os()));
}
