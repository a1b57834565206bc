fn main() {
    std::process::exit(tsprompt::cli::dispatch(std::env::args_os()));
}
