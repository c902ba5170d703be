fn main() {
    std::process::exit(sideband_sim::run(std::env::args().collect()));
}
