fn main() {
    std::process::exit(retina_pipeline::cli::main_with_args(std::env::args_os()));
}
