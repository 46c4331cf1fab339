fn main() {
    std::process::exit(kfh_cli::run(std::env::args_os()));
}
