fn main() {
    std::process::exit(qhedge_cli::run(std::env::args_os()));
}
