fn main() {
    std::process::exit(codex_cli::main_with(std::env::args_os()));
}
