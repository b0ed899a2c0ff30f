fn main() -> std::process::ExitCode {
    rpclure::cli::main()
}
