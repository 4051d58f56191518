fn main() {
    std::process::exit(rt_action::cli::run());
}
