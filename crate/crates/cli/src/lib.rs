//! Pipeline commands behind the `wordsim` binary.

pub mod commands;
pub mod sweep;

use wordsim_core::Error;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Contract(_) => 3,
        e if e.is_data_error() => 2,
        _ => 3,
    }
}
