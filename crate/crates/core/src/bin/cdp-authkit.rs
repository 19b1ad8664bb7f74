fn main() {
    std::process::exit(cdp_authkit::cli::cli_main(std::env::args_os()));
}
