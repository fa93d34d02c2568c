fn main() -> std::process::ExitCode {
    map_planner::cli::run(std::env::args_os())
}
