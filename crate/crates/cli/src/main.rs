fn main() {
    std::process::exit(jcurve_cli::run(std::env::args_os()));
}
