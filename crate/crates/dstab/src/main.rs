fn main() {
    std::process::exit(dstab::cli::run(std::env::args_os()));
}
