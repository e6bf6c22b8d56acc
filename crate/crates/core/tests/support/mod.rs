//! Checks shared by the per-module tests and the acceptance run. Each check
//! returns `Err` with a diagnostic instead of panicking, so the acceptance run
//! can report every criterion.
#![allow(dead_code)]

/// Returns `Err(format!(..))` from the enclosing function when `cond` fails.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

pub mod corpus;
pub mod gnn;
pub mod goldens;
pub mod shadow;
pub mod taint_oracle;
