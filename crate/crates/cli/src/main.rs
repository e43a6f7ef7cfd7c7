use std::process::ExitCode;

fn main() -> ExitCode {
    let cmd = match vigil_cli::parse_cli(std::env::args_os()) {
        Ok(cmd) => cmd,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let code = vigil_cli::execute(cmd, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code as u8)
}
