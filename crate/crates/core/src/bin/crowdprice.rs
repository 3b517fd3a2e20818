fn main() {
    std::process::exit(crowdprice::cli::run(std::env::args_os()));
}
