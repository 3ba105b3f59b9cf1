fn main() {
    std::process::exit(fracanom::cli::run(std::env::args_os()));
}
