fn main() {
    std::process::exit(effect_ci::cli::run(std::env::args_os()));
}
