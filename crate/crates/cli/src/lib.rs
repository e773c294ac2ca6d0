//! Experiment driver for the `wassball` solvers: toy attacks, feasibility
//! verification, image-space projections and solver benchmarks.
//!
//! Exit codes of the `wassball` binary:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | failure: I/O, bad input file, or `verify` found violations |
//! | 2 | usage error: bad or inconsistent flags |
//! | 3 | numerical abort in a solver |

pub mod attack;
pub mod bench;
pub mod output;
pub mod project;
pub mod schema;
pub mod verify;
pub mod wadv;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code for an error returned by one of the commands.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let solver = err
        .chain()
        .find_map(|e| e.downcast_ref::<wassball::Error>());
    match solver {
        Some(wassball::Error::Numerical(_)) => EXIT_NUMERICAL,
        Some(wassball::Error::InvalidParameter(_)) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn exit_codes_see_through_context() {
        let e: anyhow::Result<()> =
            Err(wassball::Error::Numerical("nan".into())).context("sample 3");
        assert_eq!(exit_code(&e.unwrap_err()), EXIT_NUMERICAL);
        let e: anyhow::Result<()> =
            Err(wassball::Error::InvalidParameter("k".into())).context("setup");
        assert_eq!(exit_code(&e.unwrap_err()), EXIT_USAGE);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), EXIT_FAILURE);
    }
}
