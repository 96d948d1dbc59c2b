fn main() {
    std::process::exit(armax_lf::cli::run(std::env::args_os()));
}
