fn main() {
    std::process::exit(qgf::run(std::env::args_os()));
}
