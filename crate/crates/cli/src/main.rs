use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, rec| writeln!(buf, "level={} target={} {}", rec.level(), rec.target(), rec.args()))
        .init();
    ExitCode::from(netac_cli::run_command(std::env::args_os()))
}
