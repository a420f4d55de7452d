fn main() {
    std::process::exit(ddga_cli::main_with(std::env::args_os().collect()));
}
