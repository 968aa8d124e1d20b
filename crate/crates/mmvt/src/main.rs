fn main() {
    std::process::exit(mmvt::cli::main_with(std::env::args_os()));
}
