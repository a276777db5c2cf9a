fn main() -> std::process::ExitCode {
    maninex::cli::main()
}
