fn main() {
    std::process::exit(gestureprint::cli::run(std::env::args_os()));
}
