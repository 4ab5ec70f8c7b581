fn main() {
    std::process::exit(crysflow::cli::run(std::env::args_os()));
}
