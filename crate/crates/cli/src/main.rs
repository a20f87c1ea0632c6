fn main() {
    std::process::exit(physrec_cli::run(std::env::args_os()));
}
