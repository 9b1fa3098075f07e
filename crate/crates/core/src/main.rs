fn main() {
    std::process::exit(evidence_controller::cli::execute(std::env::args_os()));
}
