fn main() {
    std::process::exit(riemann_latent_cli::run(std::env::args_os()));
}
