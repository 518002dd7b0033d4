use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("STYLEMUX_LOG", "warn")).format_timestamp(None).init();
    std::process::exit(stylemux::cli::run(std::env::args_os()));
}
