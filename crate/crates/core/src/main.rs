fn main() {
    std::process::exit(sraseg::cli::dispatch(std::env::args_os()));
}
