//! INAR(1): binomial thinning of the previous count plus Poisson arrivals.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{AbfError, Result};
use crate::params::{ParamVector, PriorBox};

/// Tail mass allowed beyond the returned support of a conditional pmf.
pub const PMF_TAIL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inar1Params {
    pub rho: f64,
    pub lambda: f64,
}

impl Inar1Params {
    pub const NAMES: [&'static str; 2] = ["rho", "lambda"];

    /// Independent uniform prior.
    pub fn prior() -> PriorBox {
        PriorBox::new(Self::NAMES.to_vec(), [0.0, 0.0].to_vec(), [1.0, 10.0].to_vec()).expect("static bounds are ordered")
    }

    pub fn new(rho: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(AbfError::InvalidParameter(format!("rho = {rho} outside [0, 1)")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(AbfError::InvalidParameter(format!("lambda = {lambda} must be positive")));
        }
        Ok(Self { rho, lambda })
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

    /// Mean of the stationary Poisson marginal, `λ/(1-ρ)`.
    pub fn stationary_mean(&self) -> f64 {
        self.lambda / (1.0 - self.rho)
    }
}

fn thin<R: Rng + ?Sized>(count: u64, rho: f64, rng: &mut R) -> u64 {
    if count == 0 || rho == 0.0 {
        return 0;
    }
    if count <= 64 {
        (0..count).filter(|_| rng.random::<f64>() < rho).count() as u64
    } else {
        Binomial::new(count, rho).expect("valid binomial").sample(rng)
    }
}

/// Simulates `y_1..y_length`, with `y_0` drawn from the stationary
/// Poisson(λ/(1-ρ)) marginal.
pub fn inar1_simulate<R: Rng + ?Sized>(params: &Inar1Params, length: usize, rng: &mut R) -> Vec<u64> {
    let arrivals = Poisson::new(params.lambda).expect("lambda validated");
    let init = Poisson::new(params.stationary_mean()).expect("positive mean");
    let mut prev = init.sample(rng) as u64;
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let y = thin(prev, params.rho, rng) + arrivals.sample(rng) as u64;
        out.push(y);
        prev = y;
    }
    out
}

fn binomial_row(n: u64, rho: f64) -> Vec<f64> {
    let n_us = n as usize;
    let mut row = vec![0.0; n_us + 1];
    if rho == 0.0 {
        row[0] = 1.0;
        return row;
    }
    let (lr, lq) = (rho.ln(), (1.0 - rho).ln());
    let mut ln_choose = 0.0;
    for s in 0..=n_us {
        if s > 0 {
            ln_choose += ((n_us - s + 1) as f64).ln() - (s as f64).ln();
        }
        row[s] = (ln_choose + s as f64 * lr + (n_us - s) as f64 * lq).exp();
    }
    row
}

fn poisson_table(lambda: f64, kmax: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(kmax + 1);
    let mut cur = (-lambda).exp();
    p.push(cur);
    for k in 1..=kmax {
        cur *= lambda / k as f64;
        p.push(cur);
    }
    p
}

fn convolve(binom: &[f64], pois: &[f64], k: usize) -> f64 {
    let smax = k.min(binom.len() - 1);
    (0..=smax).map(|s| binom[s] * pois[k - s]).sum()
}

/// One-step conditional pmf `Pr(Y_{T+1} = k | y_T = y_last)` on `0..=K`, where
/// `K >= support_max` is extended until the omitted tail mass is below 1e-10.
pub fn inar1_conditional_pmf(params: &Inar1Params, y_last: u64, support_max: usize) -> Vec<f64> {
    let binom = binomial_row(y_last, params.rho);
    let mut kmax = support_max.max(1);
    loop {
        let pois = poisson_table(params.lambda, kmax);
        let pmf: Vec<f64> = (0..=kmax).map(|k| convolve(&binom, &pois, k)).collect();
        let mass: f64 = pmf.iter().sum();
        if 1.0 - mass < PMF_TAIL_TOLERANCE {
            return pmf;
        }
        kmax *= 2;
    }
}

/// Sufficient statistics of the INAR transition likelihood: the first count and
/// the multiset of `(previous, current)` pairs.
#[derive(Debug, Clone)]
pub struct TransitionCounts {
    first: u64,
    pairs: Vec<((u64, u64), u32)>,
    max_prev: u64,
    max_cur: u64,
}

impl TransitionCounts {
    pub fn from_series(y: &[u64]) -> Result<Self> {
        let Some(&first) = y.first() else {
            return Err(AbfError::InsufficientData { needed: 1, got: 0 });
        };
        let mut map = std::collections::BTreeMap::new();
        for w in y.windows(2) {
            *map.entry((w[0], w[1])).or_insert(0u32) += 1;
        }
        let max_prev = map.keys().map(|k| k.0).max().unwrap_or(0);
        let max_cur = map.keys().map(|k| k.1).max().unwrap_or(0).max(first);
        Ok(Self {
            first,
            pairs: map.into_iter().collect(),
            max_prev,
            max_cur,
        })
    }

    /// Stationary log-probability of the first count plus the sum of
    /// log-transition probabilities.
    pub fn loglik(&self, params: &Inar1Params) -> f64 {
        let pois = poisson_table(params.lambda, self.max_cur as usize);
        let m = params.stationary_mean();
        let mut ll = self.first as f64 * m.ln() - m - crate::stats::ln_gamma(self.first as f64 + 1.0);
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; self.max_prev as usize + 1];
        for &((prev, cur), count) in &self.pairs {
            let row = rows[prev as usize].get_or_insert_with(|| binomial_row(prev, params.rho));
            let p = convolve(row, &pois, cur as usize);
            ll += count as f64 * p.ln();
        }
        ll
    }
}
