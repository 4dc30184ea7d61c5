fn main() {
    std::process::exit(ghlfd::cli::main_with(std::env::args_os()));
}
