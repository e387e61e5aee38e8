fn main() -> std::process::ExitCode {
    steward_cli::run(std::env::args_os())
}
