//! Library surface of the `windarb` command-line tool: configuration
//! loading, the score-file and results CSV formats, and the subcommand
//! implementations. The binary in `main.rs` is a thin wrapper so
//! integration tests can drive everything in-process.

pub mod commands;
pub mod config;
pub mod results;
pub mod scorefile;

use windarb_core::error::Error;

/// Process exit codes: 0 success, 1 usage/configuration error, 2 data
/// error, 3 internal error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) => 1,
        Error::Shape(_) => 3,
        Error::Recording { .. }
        | Error::InvalidInput(_)
        | Error::Malformed { .. }
        | Error::Io { .. } => 2,
    }
}
