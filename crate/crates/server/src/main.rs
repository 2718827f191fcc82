fn main() -> std::process::ExitCode {
    arginote_server::cli::main_with(std::env::args_os())
}
