fn main() {
    std::process::exit(vi_aoa::harness::cli::run(std::env::args_os()));
}
