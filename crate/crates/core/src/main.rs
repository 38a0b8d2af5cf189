fn main() {
    std::process::exit(geoflat::cli::run());
}
