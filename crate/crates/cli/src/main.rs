use clap::Parser;
use voltour_cli::{exit_code, run, Cli};

fn main() {
    // clap exits with status 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(err) = run(cli, &mut stdout) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
