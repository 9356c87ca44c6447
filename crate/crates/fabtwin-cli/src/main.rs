use clap::error::ErrorKind;
use clap::Parser;
use fabtwin_cli::cli::Cli;
use fabtwin_cli::commands;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    if let Err(msg) = fabtwin_cli::init_threads() {
        eprintln!("fabtwin: {msg}");
        return 1;
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { 0 } else { 1 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fabtwin: {e}");
            e.exit_code()
        }
    }
}
