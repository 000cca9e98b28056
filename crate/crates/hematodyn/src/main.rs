fn main() {
    std::process::exit(hematodyn::cli::run());
}
