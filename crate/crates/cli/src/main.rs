fn main() {
    std::process::exit(sctsvm_cli::dispatch(std::env::args_os()));
}
