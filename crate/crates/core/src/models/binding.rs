//! Probability limits of the simulation-study summaries.

use super::inar::Inar1Params;
use super::ma2::Ma2Params;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BindingModel {
    Inar1(Inar1Params),
    Ma2(Ma2Params),
}

/// INAR(1): `(λ/(1-ρ), ρ, ρ², ρ³)`, the mean followed by the first three
/// autocorrelations. MA(2): autocovariances `γ_0..γ_max_lag`.
pub fn binding_function(model: &BindingModel, max_lag: usize) -> Vec<f64> {
    match model {
        BindingModel::Inar1(p) => {
            let mut b = vec![p.stationary_mean()];
            b.extend((1..=max_lag).map(|l| p.rho.powi(l as i32)));
            b
        }
        BindingModel::Ma2(p) => {
            let g = p.autocovariances();
            (0..=max_lag).map(|l| g.get(l).copied().unwrap_or(0.0)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inar_binding_at_reference_point() {
        let b = binding_function(&BindingModel::Inar1(Inar1Params::new(0.4, 2.0).unwrap()), 3);
        let expect = [10.0 / 3.0, 0.4, 0.16, 0.064];
        for (a, e) in b.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn ma2_binding_values() {
        let w = binding_function(&BindingModel::Ma2(Ma2Params::new(0.0, 0.0, 1.5).unwrap()), 2);
        assert_eq!(w, vec![2.25, 0.0, 0.0]);
        let b = binding_function(&BindingModel::Ma2(Ma2Params::new(0.8, 0.6, 1.0).unwrap()), 4);
        let expect = [2.0, 1.28, 0.6, 0.0, 0.0];
        for (a, e) in b.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
