fn main() {
    std::process::exit(coldscatter::cli::run(std::env::args_os()));
}
