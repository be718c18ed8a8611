fn main() {
    std::process::exit(gridres::run(std::env::args_os()));
}
