fn main() { std::process::exit(eegxai::cli::run(std::env::args_os())); }
