fn main() {
    std::process::exit(refbench::cli::run(std::env::args_os()));
}
