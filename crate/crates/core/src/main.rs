fn main() {
    std::process::exit(tender_risk::cli::run(std::env::args_os()));
}
