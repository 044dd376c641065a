fn main() -> std::process::ExitCode {
    rwre_cli::run_cli(std::env::args_os())
}
