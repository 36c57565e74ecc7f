fn main() {
    std::process::exit(rggcount::cli::run(std::env::args_os()));
}
