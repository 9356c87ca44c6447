//! Library half of the `fabtwin` binary: argument types, command
//! implementations, chart rendering, and run provenance. Kept as a library
//! so integration tests can drive the same code paths in-process.

pub mod cli;
pub mod commands;
pub mod font;
pub mod plot;
pub mod provenance;

/// Apply the `FABTWIN_THREADS` cap to the global worker pool. Unset or 0
/// means one worker per core. Errors are usage problems (exit 1).
pub fn init_threads() -> Result<(), String> {
    match std::env::var("FABTWIN_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(format!("FABTWIN_THREADS unreadable: {e}")),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(()),
            Ok(n) => {
                // A second call in the same process is a no-op, not an error.
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
                Ok(())
            }
            Err(_) => {
                Err(format!("FABTWIN_THREADS must be a non-negative integer, got {s:?}"))
            }
        },
    }
}
