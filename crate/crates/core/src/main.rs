fn main() {
    std::process::exit(sixvertex::cli::run_cli(std::env::args_os()));
}
