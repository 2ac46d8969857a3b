//! Realized measures from a day of equally spaced intraday returns.

use std::f64::consts::FRAC_PI_2;

use crate::error::{AbfError, Result};

pub fn bipower_variation(r: &[f64]) -> Result<f64> {
    let m = r.len();
    if m < 2 {
        return Err(AbfError::InsufficientData { needed: 2, got: m });
    }
    let s: f64 = r.windows(2).map(|w| w[0].abs() * w[1].abs()).sum();
    Ok(FRAC_PI_2 * (m as f64 / (m - 1) as f64) * s)
}

/// Realized variance `Σ r_i²` and jump variation `max(RV - BV, 0)`.
pub fn jump_variation(r: &[f64]) -> Result<(f64, f64)> {
    let bv = bipower_variation(r)?;
    let rv: f64 = r.iter().map(|x| x * x).sum();
    Ok((rv, (rv - bv).max(0.0)))
}
