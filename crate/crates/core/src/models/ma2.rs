//! Gaussian MA(2): simulation and the exact likelihood via the innovations
//! (prediction-error) recursion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AbfError, Result};
use crate::params::{ParamVector, PriorBox};
use crate::stats::{std_normal, LN_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ma2Params {
    pub theta1: f64,
    pub theta2: f64,
    pub sigma: f64,
}

impl Ma2Params {
    pub const NAMES: [&'static str; 3] = ["theta1", "theta2", "sigma"];

    /// Independent uniform prior.
    pub fn prior() -> PriorBox {
        PriorBox::new(Self::NAMES.to_vec(), [0.0, 0.0, 0.1].to_vec(), [0.99, 0.99, 3.0].to_vec()).expect("static bounds are ordered")
    }

    pub fn new(theta1: f64, theta2: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !theta1.is_finite() || !theta2.is_finite() {
            return Err(AbfError::InvalidParameter(format!(
                "MA(2) parameters ({theta1}, {theta2}, {sigma}) invalid"
            )));
        }
        Ok(Self {
            theta1,
            theta2,
            sigma,
        })
    }

    pub fn from_vector(p: &ParamVector) -> Result<Self> {
        Self::from_slice(p.values())
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 3 {
            return Err(AbfError::DimensionMismatch {
                expected: 3,
                found: v.len(),
            });
        }
        Self::new(v[0], v[1], v[2])
    }

    /// Autocovariances `(γ0, γ1, γ2)`.
    pub fn autocovariances(&self) -> [f64; 3] {
        let s2 = self.sigma * self.sigma;
        [
            s2 * (1.0 + self.theta1 * self.theta1 + self.theta2 * self.theta2),
            s2 * self.theta1 * (1.0 + self.theta2),
            s2 * self.theta2,
        ]
    }
}

pub fn ma2_simulate<R: Rng + ?Sized>(params: &Ma2Params, length: usize, rng: &mut R) -> Vec<f64> {
    let s = params.sigma;
    let mut e2 = s * std_normal(rng);
    let mut e1 = s * std_normal(rng);
    let mut y = Vec::with_capacity(length);
    for _ in 0..length {
        let e = s * std_normal(rng);
        y.push(e + params.theta1 * e1 + params.theta2 * e2);
        e2 = e1;
        e1 = e;
    }
    y
}

/// Result of running the innovations recursion over a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationsOutput {
    pub loglik: f64,
    /// One-step-ahead conditional mean of `y_{T+1}`.
    pub next_mean: f64,
    /// One-step-ahead conditional variance of `y_{T+1}`.
    pub next_var: f64,
}

/// Exact Gaussian likelihood and terminal one-step prediction of an MA(2).
pub fn innovations(params: &Ma2Params, y: &[f64]) -> Result<InnovationsOutput> {
    let [g0, g1, g2] = params.autocovariances();
    // v_{m-2}, v_{m-1}; θ_{m-1,1}; innovation u_{m-1}
    let mut v_prev2 = f64::NAN;
    let mut v_prev = g0;
    let mut th_prev1 = 0.0;
    let mut u_prev = 0.0;
    let mut pred = 0.0;
    let mut ll = 0.0;
    for (m, &obs) in y.iter().enumerate() {
        // score observation m+1 with prediction `pred` and variance v_m
        let u = obs - pred;
        ll += -LN_SQRT_2PI - 0.5 * v_prev.ln() - 0.5 * u * u / v_prev;
        // advance to n = m + 1
        let n = m + 1;
        let (th1, th2, v_n) = if n == 1 {
            let th1 = g1 / v_prev;
            (th1, 0.0, g0 - th1 * th1 * v_prev)
        } else {
            let th2 = g2 / v_prev2;
            let th1 = (g1 - th_prev1 * th2 * v_prev2) / v_prev;
            (th1, th2, g0 - th1 * th1 * v_prev - th2 * th2 * v_prev2)
        };
        pred = th1 * u + th2 * u_prev;
        u_prev = u;
        th_prev1 = th1;
        v_prev2 = v_prev;
        v_prev = v_n;
    }
    if !(ll.is_finite() && pred.is_finite() && v_prev > 0.0) {
        return Err(AbfError::NumericalFailure(format!(
            "MA(2) innovations recursion diverged at {params:?}"
        )));
    }
    Ok(InnovationsOutput {
        loglik: ll,
        next_mean: pred,
        next_var: v_prev,
    })
}

pub fn ma2_loglikelihood(params: &Ma2Params, y: &[f64]) -> Result<f64> {
    if y.len() < 3 {
        return Err(AbfError::InsufficientData {
            needed: 3,
            got: y.len(),
        });
    }
    innovations(params, y).map(|o| o.loglik)
}

/// Mean and variance of `y_{T+1} | y_{1:T}, θ`.
pub fn ma2_one_step(params: &Ma2Params, y: &[f64]) -> Result<(f64, f64)> {
    innovations(params, y).map(|o| (o.next_mean, o.next_var))
}
