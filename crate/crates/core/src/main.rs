fn main() -> std::process::ExitCode {
    losmix::cli::main_with(std::env::args_os())
}
