//! Auxiliary GARCH-family models: conditional likelihoods, QMLE fits and
//! finite-difference scores.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::optimize::{nelder_mead_restarts, INFEASIBLE};
use crate::error::{AbfError, Result};
use crate::params::ParamVector;
use crate::rng::RngStream;
use crate::stats::{self, ln_gamma, LN_SQRT_2PI};

/// Lower bound of the Student-t degrees of freedom.
pub const NU_FLOOR: f64 = 2.1;

/// Per-coordinate tolerance on `|∂ℓ/∂β_i| / T` for a fit to count as converged,
/// scaled by `max(1, |β_i|)`.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

const N_STARTS: usize = 5;
const LOG_VAR_BOUND: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxModel {
    #[serde(rename = "GARCH-N")]
    GarchN,
    #[serde(rename = "GARCH-T")]
    GarchT,
    #[serde(rename = "TARCH-T")]
    TarchT,
    #[serde(rename = "EGARCH-T")]
    EgarchT,
    #[serde(rename = "RGARCH")]
    Rgarch,
}

impl AuxModel {
    pub const ALL: [AuxModel; 5] = [
        AuxModel::GarchN,
        AuxModel::GarchT,
        AuxModel::TarchT,
        AuxModel::EgarchT,
        AuxModel::Rgarch,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AuxModel::GarchN => "GARCH-N",
            AuxModel::GarchT => "GARCH-T",
            AuxModel::TarchT => "TARCH-T",
            AuxModel::EgarchT => "EGARCH-T",
            AuxModel::Rgarch => "RGARCH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s) || m.label().replace('-', "").eq_ignore_ascii_case(s))
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            AuxModel::GarchN => &["gamma0", "gamma1", "gamma2"],
            AuxModel::GarchT => &["gamma0", "gamma1", "gamma2", "nu"],
            AuxModel::TarchT => &["gamma0", "gamma1", "gamma2", "gamma3", "nu"],
            AuxModel::EgarchT => &["beta0", "beta1", "beta2", "beta3", "nu"],
            AuxModel::Rgarch => &[
                "gamma0", "gamma1", "gamma2", "gamma3", "gamma4", "gamma5", "gamma6", "gamma7",
            ],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// Whether the likelihood also models `ln BV_t`.
    pub fn uses_ln_bv(&self) -> bool {
        matches!(self, AuxModel::Rgarch)
    }

    fn student(&self) -> bool {
        matches!(self, AuxModel::GarchT | AuxModel::TarchT | AuxModel::EgarchT)
    }
}

impl std::fmt::Display for AuxModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Data seen by an auxiliary model: returns and, for RGARCH, `ln BV_t`.
#[derive(Debug, Clone, Copy)]
pub struct AuxData<'a> {
    pub returns: &'a [f64],
    pub ln_bv: Option<&'a [f64]>,
}

impl<'a> AuxData<'a> {
    pub fn returns(returns: &'a [f64]) -> Self {
        Self { returns, ln_bv: None }
    }

    pub fn paired(returns: &'a [f64], ln_bv: &'a [f64]) -> Self {
        Self {
            returns,
            ln_bv: Some(ln_bv),
        }
    }

    fn ln_bv_for(&self, model: AuxModel) -> Result<Option<&'a [f64]>> {
        if !model.uses_ln_bv() {
            return Ok(None);
        }
        match self.ln_bv {
            Some(b) if b.len() == self.returns.len() => Ok(Some(b)),
            Some(b) => Err(AbfError::DimensionMismatch {
                expected: self.returns.len(),
                found: b.len(),
            }),
            None => Err(AbfError::InvalidParameter("RGARCH requires ln BV data".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuxFit {
    pub model: AuxModel,
    pub beta_hat: ParamVector,
    pub converged: bool,
    pub loglik_at_opt: f64,
    /// Fitted conditional variances on the fitting data.
    pub fitted_sigma2: Vec<f64>,
}

fn check(model: AuxModel, beta: &[f64], strict: bool) -> Result<()> {
    if beta.len() != model.n_params() {
        return Err(AbfError::DimensionMismatch {
            expected: model.n_params(),
            found: beta.len(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(AbfError::InvalidAuxParameter("non-finite value".into()));
    }
    let bad = |msg: &str| Err(AbfError::InvalidAuxParameter(format!("{model}: {msg}")));
    if model.student() && !(beta[model.n_params() - 1] > 2.0) {
        return bad("nu must exceed 2");
    }
    if model == AuxModel::Rgarch && !(beta[7] > 0.0) {
        return bad("gamma7 must be positive");
    }
    if !strict {
        return Ok(());
    }
    match model {
        AuxModel::GarchN | AuxModel::GarchT => {
            if !(beta[0] > 0.0) || beta[1] < 0.0 || beta[2] < 0.0 {
                return bad("coefficients must be nonnegative with gamma0 > 0");
            }
            if beta[1] + beta[2] >= 1.0 {
                return bad("persistence must be below 1");
            }
        }
        AuxModel::TarchT => {
            if !(beta[0] > 0.0) || beta[1] < 0.0 || beta[2] < 0.0 || beta[3] < 0.0 {
                return bad("coefficients must be nonnegative with gamma0 > 0");
            }
            if beta[1] + 0.5 * beta[2] + beta[3] >= 1.0 {
                return bad("persistence must be below 1");
            }
        }
        AuxModel::EgarchT => {
            if !(beta[1].abs() < 1.0) {
                return bad("|beta1| must be below 1");
            }
        }
        AuxModel::Rgarch => {
            if !(beta[2].abs() < 1.0) {
                return bad("|gamma2| must be below 1");
            }
        }
    }
    Ok(())
}

/// `E|ε|` for a unit-variance Student-t with `ν` degrees of freedom.
fn student_abs_mean(nu: f64) -> f64 {
    (nu - 2.0).sqrt() * (ln_gamma(0.5 * (nu - 1.0)) - ln_gamma(0.5 * nu)).exp() / PI.sqrt()
}

/// Conditional variances `σ²_1..σ²_T`, initialized at the sample variance.
pub fn conditional_variances(model: AuxModel, beta: &[f64], data: &AuxData) -> Result<Vec<f64>> {
    variances_with(model, beta, data, true)
}

/// With `strict` off only the recursion itself must stay finite and
/// positive; stationarity and sign restrictions are not imposed.
fn variances_with(model: AuxModel, beta: &[f64], data: &AuxData, strict: bool) -> Result<Vec<f64>> {
    check(model, beta, strict)?;
    let r = data.returns;
    let ln_bv = data.ln_bv_for(model)?;
    let n = r.len();
    if n < 2 {
        return Err(AbfError::InsufficientData { needed: 2, got: n });
    }
    let v0 = stats::variance(r);
    if !(v0 > 0.0) {
        return Err(AbfError::DegenerateInput("returns have zero variance".into()));
    }
    let mut s2 = Vec::with_capacity(n);
    s2.push(v0);
    match model {
        AuxModel::GarchN | AuxModel::GarchT => {
            for t in 1..n {
                s2.push(beta[0] + beta[1] * r[t - 1] * r[t - 1] + beta[2] * s2[t - 1]);
            }
        }
        AuxModel::TarchT => {
            for t in 1..n {
                let r2 = r[t - 1] * r[t - 1];
                let neg = if r[t - 1] < 0.0 { r2 } else { 0.0 };
                s2.push(beta[0] + beta[1] * r2 + beta[2] * neg + beta[3] * s2[t - 1]);
            }
        }
        AuxModel::EgarchT => {
            let mean_abs = student_abs_mean(beta[4]);
            let mut lv = v0.ln();
            for t in 1..n {
                let e = r[t - 1] / s2[t - 1].sqrt();
                lv = beta[0] + beta[1] * lv + beta[2] * (e.abs() - mean_abs) + beta[3] * e;
                if lv.abs() > LOG_VAR_BOUND {
                    return Err(AbfError::NumericalFailure("EGARCH log-variance overflow".into()));
                }
                s2.push(lv.exp());
            }
        }
        AuxModel::Rgarch => {
            let b = ln_bv.expect("checked above");
            let mut lv = v0.ln();
            for t in 1..n {
                lv = beta[0] + beta[1] * b[t - 1] + beta[2] * lv;
                if lv.abs() > LOG_VAR_BOUND {
                    return Err(AbfError::NumericalFailure("RGARCH log-variance overflow".into()));
                }
                s2.push(lv.exp());
            }
        }
    }
    if s2.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(AbfError::NumericalFailure(format!("{model} variance recursion left (0, inf)")));
    }
    Ok(s2)
}

pub fn aux_loglikelihood(model: AuxModel, beta: &[f64], data: &AuxData) -> Result<f64> {
    loglik_with(model, beta, data, true)
}

fn loglik_with(model: AuxModel, beta: &[f64], data: &AuxData, strict: bool) -> Result<f64> {
    let s2 = variances_with(model, beta, data, strict)?;
    let r = data.returns;
    let mut ll = 0.0;
    if model.student() {
        let nu = beta[model.n_params() - 1];
        let c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * (nu - 2.0)).ln();
        for (x, v) in r.iter().zip(&s2) {
            ll += c - 0.5 * v.ln() - 0.5 * (nu + 1.0) * (x * x / (v * (nu - 2.0))).ln_1p();
        }
    } else {
        for (x, v) in r.iter().zip(&s2) {
            ll += -LN_SQRT_2PI - 0.5 * v.ln() - 0.5 * x * x / v;
        }
    }
    if model == AuxModel::Rgarch {
        let b = data.ln_bv.expect("validated by conditional_variances");
        let var_u = beta[7] * beta[7];
        for t in 0..r.len() {
            let e = r[t] / s2[t].sqrt();
            let prev = if t == 0 { s2[0] } else { s2[t - 1] };
            let m = beta[3] + beta[4] * prev.ln() + beta[5] * e + beta[6] * (e * e - 1.0);
            ll += stats::normal_ln_pdf(b[t], m, var_u);
        }
    }
    if !ll.is_finite() {
        return Err(AbfError::NumericalFailure(format!("{model} log-likelihood is not finite")));
    }
    Ok(ll)
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maps unconstrained optimizer coordinates to model parameters.
fn to_natural(model: AuxModel, u: &[f64]) -> Vec<f64> {
    let nu = |x: f64| NU_FLOOR + x.exp();
    match model {
        AuxModel::GarchN | AuxModel::GarchT => {
            let p = logistic(u[1]);
            let s = logistic(u[2]);
            let mut b = vec![u[0].exp(), p * s, p * (1.0 - s)];
            if model == AuxModel::GarchT {
                b.push(nu(u[3]));
            }
            b
        }
        AuxModel::TarchT => {
            let p = logistic(u[1]);
            let (e1, e2) = (u[2].exp(), u[3].exp());
            let z = e1 + e2 + 1.0;
            vec![u[0].exp(), p * e1 / z, 2.0 * p * e2 / z, p / z, nu(u[4])]
        }
        AuxModel::EgarchT => vec![u[0], u[1].tanh(), u[2], u[3], nu(u[4])],
        AuxModel::Rgarch => vec![u[0], u[1], u[2].tanh(), u[3], u[4], u[5], u[6], u[7].exp()],
    }
}

fn to_unconstrained(model: AuxModel, b: &[f64]) -> Vec<f64> {
    let nu = |x: f64| (x - NU_FLOOR).max(1e-6).ln();
    match model {
        AuxModel::GarchN | AuxModel::GarchT => {
            let p = b[1] + b[2];
            let mut u = vec![b[0].ln(), logit(p), logit(b[1] / p)];
            if model == AuxModel::GarchT {
                u.push(nu(b[3]));
            }
            u
        }
        AuxModel::TarchT => {
            let p = b[1] + 0.5 * b[2] + b[3];
            vec![b[0].ln(), logit(p), (b[1] / b[3]).ln(), (0.5 * b[2] / b[3]).ln(), nu(b[4])]
        }
        AuxModel::EgarchT => vec![b[0], b[1].atanh(), b[2], b[3], nu(b[4])],
        AuxModel::Rgarch => vec![b[0], b[1], b[2].atanh(), b[3], b[4], b[5], b[6], b[7].ln()],
    }
}

/// Data-driven starting values in model coordinates.
fn starting_values(model: AuxModel, data: &AuxData) -> Result<Vec<f64>> {
    let v = stats::variance(data.returns);
    if !(v > 0.0) {
        return Err(AbfError::DegenerateInput("returns have zero variance".into()));
    }
    Ok(match model {
        AuxModel::GarchN => vec![0.1 * v, 0.1, 0.8],
        AuxModel::GarchT => vec![0.1 * v, 0.1, 0.8, 8.0],
        AuxModel::TarchT => vec![0.1 * v, 0.05, 0.1, 0.8, 8.0],
        AuxModel::EgarchT => vec![0.1 * v.ln(), 0.9, 0.1, 0.0, 8.0],
        AuxModel::Rgarch => {
            let b = data.ln_bv_for(model)?.expect("RGARCH has ln BV");
            let (ms, mb) = (v.ln(), stats::mean(b));
            let sd = stats::variance(b).sqrt().max(1e-3);
            vec![0.5 * ms - 0.4 * mb, 0.4, 0.5, mb - ms, 1.0, 0.0, 0.0, sd]
        }
    })
}

/// Central finite-difference gradient of the log-likelihood divided by `T`.
/// Falls back to a one-sided difference when a side leaves the parameter
/// space.
pub fn aux_score(model: AuxModel, beta_hat: &[f64], data: &AuxData) -> Result<Vec<f64>> {
    let n = data.returns.len() as f64;
    // the fit can sit on the boundary of the stationary region, so the
    // difference quotients may step outside it
    let ll = |b: &[f64]| loglik_with(model, b, data, false);
    let base = ll(beta_hat)?;
    let mut g = Vec::with_capacity(beta_hat.len());
    let mut b = beta_hat.to_vec();
    for i in 0..beta_hat.len() {
        let mut d = f64::NAN;
        // near a constraint both sides can be infeasible; shrink the step
        for shrink in [1.0, 1e-2, 1e-4] {
            let h = shrink * 1e-5 * beta_hat[i].abs().max(1.0);
            b[i] = beta_hat[i] + h;
            let up = ll(&b).ok();
            b[i] = beta_hat[i] - h;
            let down = ll(&b).ok();
            b[i] = beta_hat[i];
            d = match (up, down) {
                (Some(u), Some(d)) => (u - d) / (2.0 * h),
                (Some(u), None) => (u - base) / h,
                (None, Some(d)) => (base - d) / h,
                (None, None) => continue,
            };
            break;
        }
        if !d.is_finite() {
            return Err(AbfError::NumericalFailure(format!(
                "{model} score coordinate {i} is not finite"
            )));
        }
        g.push(d / n);
    }
    Ok(g)
}

/// QMLE by Nelder–Mead in unconstrained coordinates from five jittered starts.
pub fn fit_aux_qmle(model: AuxModel, data: &AuxData, seed: u64) -> Result<AuxFit> {
    let n = data.returns.len();
    if n < 100 {
        return Err(AbfError::InsufficientData { needed: 100, got: n });
    }
    let start = to_unconstrained(model, &starting_values(model, data)?);
    let cost = |u: &[f64]| match aux_loglikelihood(model, &to_natural(model, u), data) {
        Ok(ll) => -ll / n as f64,
        Err(_) => INFEASIBLE,
    };
    let mut rng = RngStream::new(seed, 0).rng();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for k in 0..N_STARTS {
        let s: Vec<f64> = if k == 0 {
            start.clone()
        } else {
            start.iter().map(|x| x + 0.5 * stats::std_normal(&mut rng)).collect()
        };
        let (u, c) = nelder_mead_restarts(cost, &s, 0.3, 4000, 1e-12);
        if c < INFEASIBLE && best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((u, c));
        }
    }
    let Some((u, _)) = best else {
        let b = to_natural(model, &start);
        return Err(AbfError::OptimizationFailure {
            best: b,
            loglik: f64::NEG_INFINITY,
        });
    };
    let beta = to_natural(model, &u);
    let loglik = aux_loglikelihood(model, &beta, data)?;
    let converged = match aux_score(model, &beta, data) {
        Ok(g) => g
            .iter()
            .zip(&beta)
            .all(|(gi, bi)| gi.abs() < GRADIENT_TOLERANCE * bi.abs().max(1.0)),
        Err(_) => false,
    };
    let fitted_sigma2 = conditional_variances(model, &beta, data)?;
    let names: std::sync::Arc<[String]> = model.param_names().iter().map(|s| s.to_string()).collect();
    Ok(AuxFit {
        model,
        beta_hat: ParamVector::new(beta, names)?,
        converged,
        loglik_at_opt: loglik,
        fitted_sigma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simulate_garch(g: [f64; 3], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0).rng();
        let mut s2 = g[0] / (1.0 - g[1] - g[2]);
        let mut r = Vec::with_capacity(n);
        for _ in 0..n + 500 {
            let x = s2.sqrt() * stats::std_normal(&mut rng);
            r.push(x);
            s2 = g[0] + g[1] * x * x + g[2] * s2;
        }
        r.split_off(500)
    }

    /// Hand-derived gradient of the GARCH-N log-likelihood.
    fn garch_n_gradient(g: &[f64], r: &[f64]) -> [f64; 3] {
        let mut s2 = stats::variance(r);
        let mut ds = [0.0; 3];
        let mut grad = [0.0; 3];
        for t in 0..r.len() {
            if t > 0 {
                let prev = s2;
                s2 = g[0] + g[1] * r[t - 1] * r[t - 1] + g[2] * prev;
                ds = [
                    1.0 + g[2] * ds[0],
                    r[t - 1] * r[t - 1] + g[2] * ds[1],
                    prev + g[2] * ds[2],
                ];
            }
            let w = -0.5 * (1.0 / s2 - r[t] * r[t] / (s2 * s2));
            for k in 0..3 {
                grad[k] += w * ds[k];
            }
        }
        grad
    }

    #[test]
    fn constant_variance_garch_is_iid_normal() {
        let r = simulate_garch([0.05, 0.1, 0.85], 300, 1);
        let v = stats::variance(&r);
        let ll = aux_loglikelihood(AuxModel::GarchN, &[v, 0.0, 0.0], &AuxData::returns(&r)).unwrap();
        let iid: f64 = r.iter().map(|x| stats::normal_ln_pdf(*x, 0.0, v)).sum();
        assert!((ll - iid).abs() < 1e-9);
    }

    #[test]
    fn student_t_with_large_nu_approaches_normal() {
        let r = simulate_garch([0.05, 0.1, 0.85], 1000, 2);
        let d = AuxData::returns(&r);
        let n = aux_loglikelihood(AuxModel::GarchN, &[0.05, 0.1, 0.85], &d).unwrap();
        let t = aux_loglikelihood(AuxModel::GarchT, &[0.05, 0.1, 0.85, 500.0], &d).unwrap();
        assert!((n - t).abs() / (r.len() as f64) < 1e-2);
    }

    #[test]
    fn tarch_without_threshold_is_garch_t() {
        let r = simulate_garch([0.05, 0.1, 0.85], 500, 3);
        let d = AuxData::returns(&r);
        let g = aux_loglikelihood(AuxModel::GarchT, &[0.05, 0.1, 0.85, 7.0], &d).unwrap();
        let t = aux_loglikelihood(AuxModel::TarchT, &[0.05, 0.1, 0.0, 0.85, 7.0], &d).unwrap();
        assert!((g - t).abs() < 1e-12);
    }

    #[test]
    fn constraint_violation_is_reported() {
        let r = simulate_garch([0.05, 0.1, 0.85], 200, 4);
        let d = AuxData::returns(&r);
        assert!(matches!(
            aux_loglikelihood(AuxModel::GarchN, &[0.05, 0.3, 0.75], &d),
            Err(AbfError::InvalidAuxParameter(_))
        ));
        assert!(aux_loglikelihood(AuxModel::Rgarch, &[0.0; 8], &d).is_err());
    }

    #[test]
    fn finite_difference_score_matches_analytic_gradient() {
        let r = simulate_garch([0.05, 0.1, 0.85], 2000, 5);
        let g = [0.06, 0.12, 0.8];
        let fd = aux_score(AuxModel::GarchN, &g, &AuxData::returns(&r)).unwrap();
        let an = garch_n_gradient(&g, &r);
        for k in 0..3 {
            assert!((fd[k] - an[k] / r.len() as f64).abs() < 1e-5, "{k}: {} vs {}", fd[k], an[k]);
        }
    }

    #[test]
    fn transforms_round_trip() {
        for model in AuxModel::ALL {
            let u: Vec<f64> = (0..model.n_params()).map(|i| 0.3 - 0.2 * i as f64).collect();
            let b = to_natural(model, &u);
            let back = to_unconstrained(model, &b);
            for (a, c) in u.iter().zip(&back) {
                assert!((a - c).abs() < 1e-9, "{model}");
            }
        }
    }

    #[test]
    fn qmle_recovers_garch_parameters() {
        let truth = [0.05, 0.10, 0.85];
        let r = simulate_garch(truth, 100_000, 6);
        let fit = fit_aux_qmle(AuxModel::GarchN, &AuxData::returns(&r), 1).unwrap();
        for (b, t) in fit.beta_hat.values().iter().zip(truth) {
            assert!((b - t).abs() < 0.1 * t, "{:?}", fit.beta_hat.values());
        }
        assert!(fit.converged);
    }

    #[test]
    fn qmle_is_deterministic_and_satisfies_first_order_condition() {
        let r = simulate_garch([0.05, 0.1, 0.85], 2000, 7);
        let d = AuxData::returns(&r);
        let a = fit_aux_qmle(AuxModel::GarchN, &d, 3).unwrap();
        let b = fit_aux_qmle(AuxModel::GarchN, &d, 3).unwrap();
        assert_eq!(a.beta_hat.values(), b.beta_hat.values());
        let s = aux_score(AuxModel::GarchN, a.beta_hat.values(), &d).unwrap();
        assert!(s.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-3, "{s:?}");
    }

    #[test]
    fn no_arch_effect_on_iid_data() {
        let mut rng = RngStream::new(8, 0).rng();
        let n = 5000;
        let r: Vec<f64> = (0..n).map(|_| stats::std_normal(&mut rng)).collect();
        let fit = fit_aux_qmle(AuxModel::GarchN, &AuxData::returns(&r), 1).unwrap();
        // under no ARCH the QMLE of γ1 has sd near 1/√T on the boundary
        assert!(fit.beta_hat[1] < 3.0 / (n as f64).sqrt(), "{:?}", fit.beta_hat.values());
    }

    #[test]
    fn student_abs_mean_limits() {
        // ν → ∞: E|Z| = √(2/π)
        assert!((student_abs_mean(1e6) - (2.0 / PI).sqrt()).abs() < 1e-5);
    }
}
