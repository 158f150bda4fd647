fn main() {
    std::process::exit(slitflow_harness::run(std::env::args_os()));
}
