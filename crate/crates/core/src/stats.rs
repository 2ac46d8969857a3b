//! Small descriptive-statistics helpers shared across modules.

use std::f64::consts::PI;

pub use statrs::function::gamma::ln_gamma;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One standard normal draw.
pub fn std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Variance with divisor `n`.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Variance with divisor `n - 1`.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    sample_variance(x).sqrt()
}

/// Linear-interpolation quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Moment skewness `m3 / m2^{3/2}`; zero for a constant series.
pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Moment kurtosis `m4 / m2^2` (not excess); 3 for a constant series.
pub fn kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    if m2 <= 0.0 {
        3.0
    } else {
        m4 / (m2 * m2)
    }
}

/// Centered sample autocovariance at `lag` with divisor `n`.
pub fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let m = mean(x);
    let n = x.len();
    (lag..n).map(|t| (x[t] - m) * (x[t - lag] - m)).sum::<f64>() / n as f64
}

/// Lag-`lag` autocorrelation; zero when the series is constant.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let g0 = autocovariance(x, 0);
    if g0 <= 0.0 {
        0.0
    } else {
        autocovariance(x, lag) / g0
    }
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let s = sorted_copy(sample);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha` (e.g. 0.001).
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Pearson correlation of two equal-length series; zero if either is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
