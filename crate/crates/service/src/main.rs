use clap::Parser;
use vrf_service::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = vrf_service::init_threads().and_then(|_| run(cli)) {
        eprintln!("{}", e.report_line());
        std::process::exit(1);
    }
}
