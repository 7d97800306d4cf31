fn main() {
    std::process::exit(urban_abe_cli::run(std::env::args_os()));
}
