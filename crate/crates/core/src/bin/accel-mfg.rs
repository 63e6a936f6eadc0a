fn main() {
    std::process::exit(accel_mfg::cli::main_with_args(std::env::args_os()));
}
