fn main() {
    std::process::exit(bubbletower_cli::dispatch(std::env::args_os()));
}
