use std::process::ExitCode;

fn main() -> ExitCode {
    let (mut out, mut err) = (std::io::stdout(), std::io::stderr());
    ExitCode::from(kslab_cli::execute(std::env::args_os(), &mut out, &mut err))
}
