fn main() -> std::process::ExitCode {
    hdrfeat::cli::main()
}
