fn main() {
    std::process::exit(fddt_harness::cli::run(std::env::args_os()));
}
