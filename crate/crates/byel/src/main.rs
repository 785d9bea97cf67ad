fn main() {
    std::process::exit(byel::cli::run(std::env::args_os()));
}
