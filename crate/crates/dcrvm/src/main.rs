use clap::Parser;

fn main() {
    // Exit quietly when stdout closes early (e.g. piped into `head`),
    // like any other well-behaved command-line tool.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = dcrvm::cli::Cli::parse();
    std::process::exit(dcrvm::cli::main_run(cli));
}
