fn main() {
    std::process::exit(tactile_force::cli::run(std::env::args_os()));
}
