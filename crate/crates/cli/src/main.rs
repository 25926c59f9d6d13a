fn main() { std::process::exit(rescodec_cli::run(std::env::args().collect())); }
