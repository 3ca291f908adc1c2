fn main() -> std::process::ExitCode {
    stressfield::cli::main()
}
