fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("RCSOC_LOG", "warn")).init();
    let code = rcsoc::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
