fn main() {
    std::process::exit(fewstep::cli::run());
}
