fn main() {
    std::process::exit(mcf_expanders::cli::run());
}
