fn main() {
    let _ = env_logger::try_init();
    std::process::exit(argpair::cli::run_from_args(std::env::args_os()));
}
