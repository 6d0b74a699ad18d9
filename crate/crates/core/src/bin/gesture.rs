fn main() {
    std::process::exit(gesture_core::cli::main());
}
