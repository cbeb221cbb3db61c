fn main() {
    std::process::exit(dimer_floquet::runner::run_command(std::env::args_os()));
}
