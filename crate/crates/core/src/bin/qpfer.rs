fn main() -> std::process::ExitCode {
    qpfer::cli::main()
}
