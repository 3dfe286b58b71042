fn main() {
    std::process::exit(grn_ppg::cli::main_with_args(std::env::args_os()));
}
