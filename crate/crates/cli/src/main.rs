fn main() {
    std::process::exit(incmeter_cli::cli_dispatch(std::env::args_os()));
}
