fn main() {
    env_logger::init();
    std::process::exit(settle_sense::cli::main_with(std::env::args_os()));
}
