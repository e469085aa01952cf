fn main() {
    std::process::exit(tlvision::cli::main(std::env::args_os()));
}
