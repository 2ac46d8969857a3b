//! Stochastic volatility with AR(1) log-variance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LatentKind, LatentPath};
use crate::error::{AbfError, Result};
use crate::params::{ParamVector, PriorBox};
use crate::stats::std_normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    /// AR coefficient of `ln V_t`.
    pub theta1: f64,
    /// Innovation variance of `ln V_t`.
    pub theta2: f64,
}

impl SvParams {
    pub const NAMES: [&'static str; 2] = ["theta1", "theta2"];

    /// Independent uniform prior.
    pub fn prior() -> PriorBox {
        PriorBox::new(Self::NAMES.to_vec(), [0.5, 0.05].to_vec(), [0.99, 0.5].to_vec()).expect("static bounds are ordered")
    }

    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta1.abs() < 1.0) {
            return Err(AbfError::InvalidParameter(format!("theta1 = {theta1} is not stationary")));
        }
        if !(theta2 > 0.0 && theta2.is_finite()) {
            return Err(AbfError::InvalidParameter(format!("theta2 = {theta2} must be positive")));
        }
        Ok(Self { theta1, theta2 })
    }

    pub fn from_vector(p: &ParamVector) -> Result<Self> {
        Self::from_slice(p.values())
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 2 {
            return Err(AbfError::DimensionMismatch {
                expected: 2,
                found: v.len(),
            });
        }
        Self::new(v[0], v[1])
    }

    /// Stationary variance of `ln V_t`.
    pub fn stationary_log_variance(&self) -> f64 {
        self.theta2 / (1.0 - self.theta1 * self.theta1)
    }

    pub fn draw_stationary_log_v<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = std_normal(rng);
        self.stationary_log_variance().sqrt() * z
    }

    /// One transition of the log-variance.
    pub fn step_log_v<R: Rng + ?Sized>(&self, log_v: f64, rng: &mut R) -> f64 {
        let z = std_normal(rng);
        self.theta1 * log_v + self.theta2.sqrt() * z
    }

    /// Draw of `y_t` given `ln V_t`.
    pub fn sample_return<R: Rng + ?Sized>(&self, log_v: f64, rng: &mut R) -> f64 {
        let z = std_normal(rng);
        (0.5 * log_v).exp() * z
    }
}

/// Simulates returns and the variance path `V_1..V_T`; `ln V_0` is stationary.
pub fn sv_simulate<R: Rng + ?Sized>(params: &SvParams, length: usize, rng: &mut R) -> (Vec<f64>, LatentPath) {
    let mut log_v = params.draw_stationary_log_v(rng);
    let mut y = Vec::with_capacity(length);
    let mut v = Vec::with_capacity(length);
    for _ in 0..length {
        log_v = params.step_log_v(log_v, rng);
        y.push(params.sample_return(log_v, rng));
        v.push(log_v.exp());
    }
    (y, LatentPath::new(v, LatentKind::Variance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::stats;

    #[test]
    fn small_vol_of_vol_keeps_variance_near_one() {
        let p = SvParams::new(0.5, 0.0501).unwrap();
        let mut rng = RngStream::new(1, 0).rng();
        let (_, v) = sv_simulate(&p, 5000, &mut rng);
        let logs: Vec<f64> = v.values().iter().map(|x| x.ln()).collect();
        // ln V is N(0, 0.0668): V stays within a factor of e of 1 almost surely
        assert!(logs.iter().all(|l| l.abs() < 1.5));
        assert!(stats::mean(&logs).abs() < 0.05);
    }

    #[test]
    fn log_variance_has_stationary_variance() {
        let p = SvParams::new(0.9, 0.1).unwrap();
        let mut rng = RngStream::new(2, 0).rng();
        let n = 200_000;
        let (_, v) = sv_simulate(&p, n, &mut rng);
        let logs: Vec<f64> = v.values().iter().map(|x| x.ln()).collect();
        let target = p.stationary_log_variance();
        // var of the sample variance of a Gaussian AR(1): 2σ⁴(1+φ²)/((1-φ²)n)
        let se = (2.0 * target * target * (1.0 + 0.81) / (0.19 * n as f64)).sqrt();
        assert!((stats::variance(&logs) - target).abs() < 3.0 * se);
    }

    #[test]
    fn returns_are_leptokurtic() {
        let p = SvParams::new(0.9, 0.1).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        let (y, _) = sv_simulate(&p, 100_000, &mut rng);
        // E y⁴ / (E y²)² = 3 exp(σ²_lnV) ≈ 3.9
        assert!(stats::kurtosis(&y) > 3.3);
    }
}
