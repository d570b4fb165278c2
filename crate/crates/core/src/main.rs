fn main() -> std::process::ExitCode {
    adaptive_rmst::cli::main_exit()
}
