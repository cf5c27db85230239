fn main() -> std::process::ExitCode {
    vcox::cli::main()
}
