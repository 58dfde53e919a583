fn main() {
    std::process::exit(cmtop::cli::run(std::env::args_os()));
}
