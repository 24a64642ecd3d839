fn main() {
    std::process::exit(polar_bm3d::cli::run(std::env::args_os()));
}
