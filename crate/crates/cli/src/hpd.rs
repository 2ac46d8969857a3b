//! Highest-posterior-density intervals from draws.

use anyhow::{ensure, Result};

/// Shortest interval holding `ceil(level * n)` of the sorted draws.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    ensure!(draws.len() >= 100, "HPD interval needs at least 100 draws, got {}", draws.len());
    ensure!(level > 0.0 && level <= 1.0, "level {level} outside (0, 1]");
    ensure!(draws.iter().all(|d| d.is_finite()), "non-finite draw");
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let (mut best, mut lo) = (f64::INFINITY, 0);
    for i in 0..=n - k {
        let w = s[i + k - 1] - s[i];
        if w < best {
            best = w;
            lo = i;
        }
    }
    Ok((s[lo], s[lo + k - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use abf_core::rng::RngStream;
    use abf_core::stats;

    #[test]
    fn full_level_spans_the_sample() {
        let d: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64).collect();
        assert_eq!(hpd_interval(&d, 1.0).unwrap(), (0.0, 199.0));
    }

    #[test]
    fn uniform_interval_length() {
        // uniforms through the probability integral transform
        let mut rng = RngStream::new(1, 0).rng();
        let d: Vec<f64> = (0..100_000)
            .map(|_| stats::normal_cdf(stats::std_normal(&mut rng), 0.0, 1.0))
            .collect();
        let (lo, hi) = hpd_interval(&d, 0.95).unwrap();
        assert!((hi - lo - 0.95).abs() < 0.01, "{lo} {hi}");
    }

    #[test]
    fn normal_interval_is_symmetric() {
        let mut rng = RngStream::new(2, 0).rng();
        let d: Vec<f64> = (0..50_000).map(|_| 3.0 + stats::std_normal(&mut rng)).collect();
        let (lo, hi) = hpd_interval(&d, 0.95).unwrap();
        // the location of the shortest window is only weakly identified
        // because the width is flat near its minimum
        assert!((0.5 * (lo + hi) - 3.0).abs() < 0.1, "{lo} {hi}");
        assert!((hi - lo - 2.0 * 1.959_964).abs() < 0.05);
        let s = stats::sorted_copy(&d);
        let equal_tailed = stats::quantile_sorted(&s, 0.975) - stats::quantile_sorted(&s, 0.025);
        assert!(hi - lo <= equal_tailed + 1e-12);
    }

    #[test]
    fn too_few_draws_is_an_error() {
        assert!(hpd_interval(&[1.0; 99], 0.9).is_err());
    }
}
