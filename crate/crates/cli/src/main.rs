fn main() -> std::process::ExitCode {
    fhshrink_cli::main_entry()
}
