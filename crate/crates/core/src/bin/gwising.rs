fn main() {
    std::process::exit(gwising::cli::run(std::env::args_os()));
}
