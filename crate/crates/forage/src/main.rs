fn main() {
    std::process::exit(forage::interface::cli_run(std::env::args_os()));
}
