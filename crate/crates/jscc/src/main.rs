fn main() {
    jscc::allocator::tune();
    std::process::exit(jscc::cli::run(std::env::args_os()));
}
