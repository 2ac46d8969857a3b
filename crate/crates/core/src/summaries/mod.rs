//! Summary statistics η(·): sample autocovariances, auxiliary-model scores
//! and the realized-measure supplements.

pub mod aux;
pub mod optimize;

use serde::{Deserialize, Serialize};

pub use aux::{aux_loglikelihood, aux_score, conditional_variances, fit_aux_qmle, AuxData, AuxFit, AuxModel};

use crate::error::{AbfError, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Sample mean followed by centered autocovariances at lags `1..=l`.
    MeanAndCentered,
    /// Uncentered `T⁻¹ Σ y_t y_{t-j}` at lags `0..=l`.
    Uncentered,
}

/// Sample autocovariances at lags `0..=max_lag`, divisor `T`.
pub fn sample_autocovariances(y: &[f64], max_lag: usize, centered: bool) -> Result<Vec<f64>> {
    if y.len() <= max_lag {
        return Err(AbfError::InsufficientData {
            needed: max_lag + 1,
            got: y.len(),
        });
    }
    let n = y.len();
    let m = if centered { stats::mean(y) } else { 0.0 };
    Ok((0..=max_lag)
        .map(|l| (l..n).map(|t| (y[t] - m) * (y[t - l] - m)).sum::<f64>() / n as f64)
        .collect())
}

/// `(ȳ, γ1..γl)` for [`Centering::MeanAndCentered`], `(γ0..γl)` otherwise.
pub fn autocov_summary(y: &[f64], max_lag: usize, centering: Centering) -> Result<Vec<f64>> {
    match centering {
        Centering::MeanAndCentered => {
            let g = sample_autocovariances(y, max_lag, true)?;
            let mut out = vec![stats::mean(y)];
            out.extend_from_slice(&g[1..]);
            Ok(out)
        }
        Centering::Uncentered => sample_autocovariances(y, max_lag, false),
    }
}

/// OLS of `y` on `(1, x)`: intercept, slope and residual standard deviation.
fn simple_regression(y: &[f64], x: &[f64]) -> Result<(f64, f64, f64)> {
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(AbfError::DegenerateRegression);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    Ok((intercept, slope, (rss / y.len() as f64).sqrt()))
}

/// Realized-measure statistics in the order
/// `Mean(sign(r)√JV), Var(JV), Corr(JV_t, JV_{t-1})`, then either
/// `Skew(ln BV), Kurt(ln BV), κ0, κ1, κ3` (with the ln BV block) or
/// `Kurt(ln BV)` alone. `κ` come from regressing `ln BV_t` on `ln σ̂²_t`,
/// `κ3` being the residual standard deviation.
pub fn supplementary_stats(
    returns: &[f64],
    ln_bv: &[f64],
    jv: &[f64],
    fitted_sigma2: &[f64],
    include_ln_bv_block: bool,
) -> Result<Vec<f64>> {
    let n = returns.len();
    for len in [ln_bv.len(), jv.len(), fitted_sigma2.len()] {
        if len != n {
            return Err(AbfError::DimensionMismatch { expected: n, found: len });
        }
    }
    if n < 3 {
        return Err(AbfError::InsufficientData { needed: 3, got: n });
    }
    if fitted_sigma2.iter().any(|v| !(*v > 0.0)) {
        return Err(AbfError::DegenerateInput("fitted variances must be positive".into()));
    }
    let signed: Vec<f64> = returns
        .iter()
        .zip(jv)
        .map(|(r, j)| if *r > 0.0 { j.sqrt() } else if *r < 0.0 { -j.sqrt() } else { 0.0 })
        .collect();
    let mut out = vec![
        stats::mean(&signed),
        stats::variance(jv),
        stats::correlation(&jv[1..], &jv[..n - 1]),
    ];
    if include_ln_bv_block {
        let ln_s2: Vec<f64> = fitted_sigma2.iter().map(|v| v.ln()).collect();
        let (k0, k1, k3) = simple_regression(ln_bv, &ln_s2)?;
        out.extend([stats::skewness(ln_bv), stats::kurtosis(ln_bv), k0, k1, k3]);
    } else {
        out.push(stats::kurtosis(ln_bv));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SummarySpec {
    Autocov { max_lag: usize, centering: Centering },
    AuxScore { model: AuxModel },
    AuxScorePlusSupplementary { model: AuxModel },
}

impl SummarySpec {
    pub fn dim(&self) -> usize {
        match self {
            SummarySpec::Autocov { max_lag, .. } => max_lag + 1,
            SummarySpec::AuxScore { model } => model.n_params(),
            SummarySpec::AuxScorePlusSupplementary { model } => {
                model.n_params() + if *model == AuxModel::Rgarch { 4 } else { 8 }
            }
        }
    }

    pub fn aux_model(&self) -> Option<AuxModel> {
        match self {
            SummarySpec::Autocov { .. } => None,
            SummarySpec::AuxScore { model } | SummarySpec::AuxScorePlusSupplementary { model } => Some(*model),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SummarySpec::Autocov { max_lag, .. } => format!("autocov({max_lag})"),
            SummarySpec::AuxScore { model } => format!("score[{model}]"),
            SummarySpec::AuxScorePlusSupplementary { model } => format!("score[{model}]+supp"),
        }
    }
}

/// Data a summary is computed from. Count series are passed as `f64`.
#[derive(Debug, Clone, Copy)]
pub struct SummaryInput<'a> {
    pub series: &'a [f64],
    pub ln_bv: Option<&'a [f64]>,
    pub jv: Option<&'a [f64]>,
}

impl<'a> SummaryInput<'a> {
    pub fn univariate(series: &'a [f64]) -> Self {
        Self {
            series,
            ln_bv: None,
            jv: None,
        }
    }

    pub fn realized(returns: &'a [f64], ln_bv: &'a [f64], jv: &'a [f64]) -> Self {
        Self {
            series: returns,
            ln_bv: Some(ln_bv),
            jv: Some(jv),
        }
    }

    fn aux_data(&self) -> AuxData<'a> {
        AuxData {
            returns: self.series,
            ln_bv: self.ln_bv,
        }
    }
}

/// Summary vector of dimension `spec.dim()`. Score-based specs evaluate at
/// the QMLE fitted to the observed data.
pub fn build_summary(spec: &SummarySpec, data: &SummaryInput, observed_fit: Option<&AuxFit>) -> Result<Vec<f64>> {
    let out = match spec {
        SummarySpec::Autocov { max_lag, centering } => autocov_summary(data.series, *max_lag, *centering)?,
        SummarySpec::AuxScore { model } | SummarySpec::AuxScorePlusSupplementary { model } => {
            let fit = observed_fit
                .ok_or_else(|| AbfError::InvalidParameter(format!("{} needs an observed-data fit", spec.label())))?;
            if fit.model != *model {
                return Err(AbfError::InvalidParameter(format!(
                    "fit is for {} but the spec uses {model}",
                    fit.model
                )));
            }
            let aux = data.aux_data();
            let mut s = aux_score(*model, fit.beta_hat.values(), &aux)?;
            if let SummarySpec::AuxScorePlusSupplementary { .. } = spec {
                let missing = || AbfError::InvalidParameter("supplementary statistics need ln BV and JV".into());
                let ln_bv = data.ln_bv.ok_or_else(missing)?;
                let jv = data.jv.ok_or_else(missing)?;
                let s2 = conditional_variances(*model, fit.beta_hat.values(), &aux)?;
                s.extend(supplementary_stats(data.series, ln_bv, jv, &s2, *model != AuxModel::Rgarch)?);
            }
            s
        }
    };
    debug_assert_eq!(out.len(), spec.dim());
    if out.iter().any(|v| !v.is_finite()) {
        return Err(AbfError::NumericalFailure(format!("{} produced a non-finite summary", spec.label())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{binding_function, jumpdiff_simulate, ma2_simulate, BindingModel, JumpDiffParams, Ma2Params};
    use crate::rng::RngStream;

    #[test]
    fn constant_series_has_zero_centered_autocovariances() {
        let y = vec![2.5; 50];
        assert_eq!(autocov_summary(&y, 3, Centering::MeanAndCentered).unwrap(), vec![2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn lag_zero_is_variance_or_mean_square() {
        let y = [1.0, 3.0, -2.0, 4.0];
        assert!((sample_autocovariances(&y, 0, true).unwrap()[0] - stats::variance(&y)).abs() < 1e-15);
        assert_eq!(autocov_summary(&y, 0, Centering::Uncentered).unwrap()[0], 30.0 / 4.0);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(
            autocov_summary(&[1.0, 2.0], 2, Centering::Uncentered),
            Err(AbfError::InsufficientData { .. })
        ));
    }

    #[test]
    fn ma2_autocovariances_match_binding_function() {
        let p = Ma2Params::new(0.8, 0.6, 1.0).unwrap();
        let mut rng = RngStream::new(41, 0).rng();
        let n = 100_000;
        let y = ma2_simulate(&p, n, &mut rng);
        let eta = autocov_summary(&y, 2, Centering::Uncentered).unwrap();
        let b = binding_function(&BindingModel::Ma2(p), 2);
        // Bartlett bound on the standard error, as in the simulator test
        let se = (2.0 * (4.0 + 2.0 * 1.6384 + 2.0 * 0.36) / n as f64).sqrt();
        for (e, t) in eta.iter().zip(&b) {
            assert!((e - t).abs() < 3.0 * se, "{eta:?} vs {b:?}");
        }
    }

    #[test]
    fn supplementary_regression_recovers_exact_line() {
        let s2: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let ln_bv: Vec<f64> = s2.iter().map(|v| 0.3 + 1.7 * v.ln()).collect();
        let r: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let jv = vec![0.25; 50];
        let s = supplementary_stats(&r, &ln_bv, &jv, &s2, true).unwrap();
        assert_eq!(s.len(), 8);
        assert!((s[5] - 0.3).abs() < 1e-10 && (s[6] - 1.7).abs() < 1e-10);
        assert!(s[7] < 1e-10);
        // alternating signs with equal JV cancel
        assert!(s[0].abs() < 1e-15);
        assert_eq!(supplementary_stats(&r, &ln_bv, &jv, &s2, false).unwrap().len(), 4);
    }

    #[test]
    fn constant_regressor_is_degenerate() {
        let r = vec![1.0, -1.0, 0.5, 0.2];
        let s2 = vec![1.0; 4];
        assert!(matches!(
            supplementary_stats(&r, &r, &[0.0; 4], &s2, true),
            Err(AbfError::DegenerateRegression)
        ));
    }

    #[test]
    fn iid_jump_variation_is_uncorrelated() {
        let mut rng = RngStream::new(42, 0).rng();
        let n = 20_000;
        let jv: Vec<f64> = (0..n).map(|_| stats::std_normal(&mut rng).powi(2)).collect();
        let r: Vec<f64> = (0..n).map(|_| stats::std_normal(&mut rng)).collect();
        let s2: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let s = supplementary_stats(&r, &r, &jv, &s2, true).unwrap();
        assert!(s[2].abs() < 3.0 / (n as f64).sqrt());
        // symmetric returns: mean of sign(r)√JV has sd ≈ 1/√n
        assert!(s[0].abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn empirical_spec_dimensions() {
        let dims: Vec<usize> = [AuxModel::GarchN, AuxModel::GarchT, AuxModel::TarchT, AuxModel::Rgarch]
            .iter()
            .map(|m| SummarySpec::AuxScorePlusSupplementary { model: *m }.dim())
            .collect();
        assert_eq!(dims, vec![11, 12, 13, 12]);
        let inar = SummarySpec::Autocov {
            max_lag: 3,
            centering: Centering::MeanAndCentered,
        };
        assert_eq!(inar.dim(), 4);
    }

    #[test]
    fn built_summaries_have_spec_dimension() {
        let p = JumpDiffParams {
            psi0: 0.0,
            psi1: 1.0,
            sigma_bv: 0.3,
            omega: -0.05,
            rho: 0.9,
            sigma_h: 0.2,
            alpha: 1.8,
            d0: 0.1,
            beta: 0.69,
            gamma: 0.12,
            mu: 0.0,
            sigma_z: 1.2,
        };
        let mut rng = RngStream::new(43, 0).rng();
        let obs = jumpdiff_simulate(&p, 400, 20, &mut rng).unwrap();
        let sim = jumpdiff_simulate(&p, 400, 20, &mut rng).unwrap();
        for model in [AuxModel::GarchN, AuxModel::GarchT, AuxModel::TarchT, AuxModel::Rgarch] {
            let obs_in = SummaryInput::realized(&obs.returns, &obs.ln_bv, &obs.jv);
            let fit = fit_aux_qmle(model, &obs_in.aux_data(), 1).unwrap();
            let spec = SummarySpec::AuxScorePlusSupplementary { model };
            let s = build_summary(&spec, &SummaryInput::realized(&sim.returns, &sim.ln_bv, &sim.jv), Some(&fit)).unwrap();
            assert_eq!(s.len(), spec.dim());
        }
    }
}
