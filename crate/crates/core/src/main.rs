fn main() {
    std::process::exit(graphon_spde::cli::run());
}
