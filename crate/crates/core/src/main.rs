fn main() -> std::process::ExitCode {
    exag::cli::main()
}
