//! Recorded inequality checks.
//!
//! The rounding pipeline asserts a number of cost inequalities at run time;
//! each assertion is captured as a [`CheckRecord`] (with its slack) so
//! reports can show how tight every bound was, and any violation becomes an
//! invariant error instead of silent bad output.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tol;

/// One verified inequality `lhs <= rhs`, with `slack = rhs - lhs`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Verifies `lhs <= rhs` up to a relative tolerance (scaled by
/// `max(1, |lhs|, |rhs|)`) and records the outcome.
pub fn check_le(name: &str, lhs: f64, rhs: f64, rel_tol: f64) -> Result<CheckRecord> {
    let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
    if !(lhs <= rhs + rel_tol * scale) {
        return Err(Error::invariant(format!(
            "{name}: expected {lhs} <= {rhs} (tolerance {})",
            rel_tol * scale
        )));
    }
    Ok(CheckRecord {
        name: name.to_string(),
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

/// [`check_le`] at the standard numeric tolerance.
pub fn check_le_std(name: &str, lhs: f64, rhs: f64) -> Result<CheckRecord> {
    check_le(name, lhs, rhs, tol::EPS_NUM)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_slack() {
        let rec = check_le_std("bound", 2.0, 5.0).unwrap();
        assert_eq!(rec.slack, 3.0);
        assert!(check_le_std("bound", 5.0 + 1e-6, 5.0).is_err());
        // Tolerance scales with magnitude.
        assert!(check_le("big", 1e9 + 1.0, 1e9, 1e-8).is_ok());
        assert!(check_le("nan", f64::NAN, 1.0, 1e-9).is_err());
    }
}
