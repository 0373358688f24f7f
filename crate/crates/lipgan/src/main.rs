fn main() {
    let seed = std::env::var(lipgan::config::SEED_ENV).ok();
    std::process::exit(lipgan::cli::run(std::env::args_os(), seed.as_deref()));
}
