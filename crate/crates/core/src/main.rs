fn main() {
    std::process::exit(irtm::cli::cli_main(std::env::args_os()));
}
