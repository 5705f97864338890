fn main() {
    std::process::exit(gshp_cli::run(std::env::args_os()));
}
