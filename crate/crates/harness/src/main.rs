fn main() {
    let code = sigtrace_harness::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
