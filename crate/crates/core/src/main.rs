fn main() {
    std::process::exit(uqnet::cli::run(std::env::args_os()));
}
