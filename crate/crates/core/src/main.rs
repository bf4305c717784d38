fn main() { std::process::exit(rumnet::cli::run(std::env::args_os())); }
