fn main() {
    std::process::exit(noisy_secretary::cli::main_exit_code());
}
