use clap::Parser;

use midbox::cli::{run, Cli};
use midbox::AppError;

fn main() {
    if let Err(e) = configure_threads() {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

/// Applies MIDBOX_THREADS to the global worker pool (default: all cores).
fn configure_threads() -> Result<(), AppError> {
    match std::env::var("MIDBOX_THREADS") {
        Err(_) => Ok(()),
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| AppError::input(format!("MIDBOX_THREADS must be a positive integer, got {v:?}")))?;
            if n == 0 {
                return Err(AppError::input("MIDBOX_THREADS must be a positive integer"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| AppError::internal(format!("thread pool: {e}")))
        }
    }
}
