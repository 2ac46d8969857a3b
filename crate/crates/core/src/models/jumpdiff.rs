//! Return/bipower-variation model with α-stable log-variance and self-exciting
//! jumps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::realized::{bipower_variation, jump_variation};
use super::stable::alpha_stable_draw;
use super::{LatentKind, LatentPath};
use crate::error::{AbfError, Result};
use crate::params::{ParamVector, PriorBox};
use crate::stats::{self, std_normal};

pub const INTENSITY_FLOOR: f64 = 1e-8;

/// Variance floor in the return density, guarding `e^h` underflow.
const VAR_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpDiffParams {
    pub psi0: f64,
    pub psi1: f64,
    pub sigma_bv: f64,
    pub omega: f64,
    pub rho: f64,
    pub sigma_h: f64,
    pub alpha: f64,
    /// Unconditional jump intensity.
    pub d0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub sigma_z: f64,
}

impl JumpDiffParams {
    pub const NAMES: [&'static str; 12] = [
        "psi0", "psi1", "sigma_bv", "omega", "rho", "sigma_h", "alpha", "d0", "beta", "gamma", "mu", "sigma_z",
    ];
    pub const PRIOR_LOWER: [f64; 12] = [-0.5, 0.5, 0.001, -1.0, 0.5, 0.001, 1.5, 0.001, 0.5, 0.001, -1.0, 0.5];
    pub const PRIOR_UPPER: [f64; 12] = [0.5, 1.5, 1.0, 1.0, 0.99, 0.3, 2.0, 0.3, 0.99, 0.2, 1.0, 3.0];

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(AbfError::DimensionMismatch {
                expected: 12,
                found: v.len(),
            });
        }
        let p = Self {
            psi0: v[0],
            psi1: v[1],
            sigma_bv: v[2],
            omega: v[3],
            rho: v[4],
            sigma_h: v[5],
            alpha: v[6],
            d0: v[7],
            beta: v[8],
            gamma: v[9],
            mu: v[10],
            sigma_z: v[11],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_vector(p: &ParamVector) -> Result<Self> {
        Self::from_slice(p.values())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.psi0,
            self.psi1,
            self.sigma_bv,
            self.omega,
            self.rho,
            self.sigma_h,
            self.alpha,
            self.d0,
            self.beta,
            self.gamma,
            self.mu,
            self.sigma_z,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(AbfError::InvalidParameter("non-finite jump-diffusion parameter".into()));
        }
        if self.beta + self.gamma >= 1.0 {
            return Err(AbfError::ExplosiveIntensity(self.beta + self.gamma));
        }
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(AbfError::InvalidParameter(format!("alpha = {} outside (1, 2]", self.alpha)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(AbfError::InvalidParameter(format!("rho = {} is not stationary", self.rho)));
        }
        if !(self.d0 > 0.0 && self.d0 < 1.0) || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(AbfError::InvalidParameter("intensity parameters out of range".into()));
        }
        if self.sigma_bv < 0.0 || self.sigma_h < 0.0 || self.sigma_z < 0.0 {
            return Err(AbfError::InvalidParameter("negative scale parameter".into()));
        }
        Ok(())
    }

    /// Uniform prior box on the twelve parameters, truncated to `β + γ < 1`.
    pub fn prior() -> PriorBox {
        PriorBox::new(
            Self::NAMES.to_vec(),
            Self::PRIOR_LOWER.to_vec(),
            Self::PRIOR_UPPER.to_vec(),
        )
        .expect("static bounds are ordered")
        .with_constraint(Self::admissible)
    }

    /// Prior restriction `β + γ < 1`.
    pub fn admissible(v: &[f64]) -> bool {
        v.len() == 12 && v[8] + v[9] < 1.0
    }

    /// Intercept of the intensity recursion, `d0(1 - β - γ)`.
    pub fn d(&self) -> f64 {
        self.d0 * (1.0 - self.beta - self.gamma)
    }

    pub fn initial_state(&self) -> JumpState {
        JumpState {
            h: self.omega / (1.0 - self.rho),
            jump: false,
            next_intensity: self.d0,
        }
    }

    /// Advances `(h, ΔN, δ)` one day.
    pub fn step_state<R: Rng + ?Sized>(&self, s: &JumpState, rng: &mut R) -> JumpState {
        let eta = alpha_stable_draw(self.alpha, -1.0, rng);
        let h = self.omega + self.rho * s.h + self.sigma_h * eta;
        let jump = rng.random::<f64>() < s.next_intensity;
        let next = self.d() + self.beta * s.next_intensity + if jump { self.gamma } else { 0.0 };
        JumpState {
            h,
            jump,
            next_intensity: next.clamp(INTENSITY_FLOOR, 1.0 - INTENSITY_FLOOR),
        }
    }

    /// Draws `(r_t, ln BV_t)` given the day's state, with the jump size integrated in.
    pub fn sample_observation<R: Rng + ?Sized>(&self, s: &JumpState, rng: &mut R) -> (f64, f64) {
        let e = std_normal(rng);
        let z = std_normal(rng);
        let zeta = std_normal(rng);
        let jump = if s.jump { self.mu + self.sigma_z * z } else { 0.0 };
        let r = (0.5 * s.h).exp() * e + jump;
        (r, self.psi0 + self.psi1 * s.h + self.sigma_bv * zeta)
    }

    /// `ln p(r, ln BV | h, ΔN)` with the jump size marginalized.
    pub fn log_measurement(&self, s: &JumpState, r: f64, ln_bv: f64) -> f64 {
        let (m, v) = if s.jump {
            (self.mu, s.h.exp() + self.sigma_z * self.sigma_z)
        } else {
            (0.0, s.h.exp())
        };
        let lr = stats::normal_ln_pdf(r, m, v.max(VAR_FLOOR));
        let lb = stats::normal_ln_pdf(ln_bv, self.psi0 + self.psi1 * s.h, (self.sigma_bv * self.sigma_bv).max(VAR_FLOOR));
        lr + lb
    }
}

/// Latent state of one day: log-variance, jump indicator and the intensity
/// for the following day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpState {
    pub h: f64,
    pub jump: bool,
    pub next_intensity: f64,
}

/// Simulated daily series, realized measures and latent paths.
#[derive(Debug, Clone)]
pub struct JumpDiffSeries {
    pub returns: Vec<f64>,
    pub ln_bv: Vec<f64>,
    pub rv: Vec<f64>,
    /// Bipower variation computed from the intraday path.
    pub bv: Vec<f64>,
    pub jv: Vec<f64>,
    /// Day-major intraday returns, `intraday_per_day` per day.
    pub intraday: Vec<f64>,
    pub intraday_per_day: usize,
    pub log_variance: LatentPath,
    pub jumps: LatentPath,
    pub jump_sizes: LatentPath,
    pub intensity: LatentPath,
}

impl JumpDiffSeries {
    pub fn day(&self, t: usize) -> &[f64] {
        &self.intraday[t * self.intraday_per_day..(t + 1) * self.intraday_per_day]
    }
}

/// Simulates `length` days. Each day's diffusive return is spread evenly over
/// `intraday_per_day` Gaussian increments and the jump lands on one uniformly
/// chosen increment, so `r_t` is the intraday sum.
pub fn jumpdiff_simulate<R: Rng + ?Sized>(
    params: &JumpDiffParams,
    length: usize,
    intraday_per_day: usize,
    rng: &mut R,
) -> Result<JumpDiffSeries> {
    params.validate()?;
    if intraday_per_day < 2 {
        return Err(AbfError::InsufficientData {
            needed: 2,
            got: intraday_per_day,
        });
    }
    let m = intraday_per_day;
    let scale = 1.0 / (m as f64).sqrt();
    let mut out = JumpDiffSeries {
        returns: Vec::with_capacity(length),
        ln_bv: Vec::with_capacity(length),
        rv: Vec::with_capacity(length),
        bv: Vec::with_capacity(length),
        jv: Vec::with_capacity(length),
        intraday: Vec::with_capacity(length * m),
        intraday_per_day: m,
        log_variance: LatentPath::new(Vec::with_capacity(length), LatentKind::LogVariance),
        jumps: LatentPath::new(Vec::with_capacity(length), LatentKind::JumpIndicator),
        jump_sizes: LatentPath::new(Vec::with_capacity(length), LatentKind::JumpSize),
        intensity: LatentPath::new(Vec::with_capacity(length), LatentKind::Intensity),
    };
    let mut state = params.initial_state();
    for _ in 0..length {
        let delta = state.next_intensity;
        state = params.step_state(&state, rng);
        let vol = (0.5 * state.h).exp();
        let start = out.intraday.len();
        for _ in 0..m {
            let e = std_normal(rng);
            out.intraday.push(vol * scale * e);
        }
        let z = std_normal(rng);
        let size = params.mu + params.sigma_z * z;
        if state.jump {
            let at = rng.random_range(0..m);
            out.intraday[start + at] += size;
        }
        let zeta = std_normal(rng);
        let day = &out.intraday[start..];
        let (rv, jv) = jump_variation(day)?;
        out.bv.push(bipower_variation(day)?);
        out.rv.push(rv);
        out.jv.push(jv);
        out.returns.push(day.iter().sum());
        out.ln_bv.push(params.psi0 + params.psi1 * state.h + params.sigma_bv * zeta);
        out.log_variance.values.push(state.h);
        out.jumps.values.push(if state.jump { 1.0 } else { 0.0 });
        out.jump_sizes.values.push(if state.jump { size } else { 0.0 });
        out.intensity.values.push(delta);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn base() -> JumpDiffParams {
        JumpDiffParams {
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
        }
    }

    #[test]
    fn long_run_jump_frequency_matches_unconditional_intensity() {
        let p = base();
        let mut rng = RngStream::new(31, 0).rng();
        let s = jumpdiff_simulate(&p, 100_000, 4, &mut rng).unwrap();
        let j = s.jumps.values();
        let freq = stats::mean(j);
        // batch means for the standard error: jumps cluster
        let batches: Vec<f64> = j.chunks(1000).map(stats::mean).collect();
        let se = stats::std_dev(&batches) / (batches.len() as f64).sqrt();
        assert!((freq - 0.1).abs() < 3.0 * se, "freq {freq} se {se}");
    }

    #[test]
    fn no_excitation_keeps_intensity_constant() {
        let mut p = base();
        p.beta = 0.0;
        p.gamma = 0.0;
        let mut rng = RngStream::new(32, 0).rng();
        let s = jumpdiff_simulate(&p, 500, 4, &mut rng).unwrap();
        assert!(s.intensity.values().iter().all(|d| (d - 0.1).abs() < 1e-15));
    }

    #[test]
    fn degenerate_jump_size_removes_jumps_from_returns() {
        let mut p = base();
        p.mu = 0.0;
        p.sigma_z = 0.0;
        let mut rng = RngStream::new(33, 0).rng();
        let s = jumpdiff_simulate(&p, 2000, 8, &mut rng).unwrap();
        assert!(s.jump_sizes.values().iter().all(|z| *z == 0.0));
        // the standardized return is then exactly Gaussian
        let z: Vec<f64> = s
            .returns
            .iter()
            .zip(s.log_variance.values())
            .map(|(r, h)| r / (0.5 * h).exp())
            .collect();
        assert!((stats::variance(&z) - 1.0).abs() < 0.1);
        assert!((stats::kurtosis(&z) - 3.0).abs() < 0.4);
    }

    #[test]
    fn explosive_intensity_is_rejected() {
        let mut p = base();
        p.beta = 0.9;
        p.gamma = 0.1;
        let mut rng = RngStream::new(34, 0).rng();
        assert!(matches!(
            jumpdiff_simulate(&p, 10, 4, &mut rng),
            Err(AbfError::ExplosiveIntensity(_))
        ));
    }

    #[test]
    fn intensities_stay_in_unit_interval_under_prior() {
        let prior = JumpDiffParams::prior();
        let mut rng = RngStream::new(35, 0).rng();
        for _ in 0..1000 {
            let theta = prior.sample(&mut rng).unwrap();
            let p = JumpDiffParams::from_vector(&theta).unwrap();
            let mut state = p.initial_state();
            for _ in 0..500 {
                state = p.step_state(&state, &mut rng);
                assert!(state.next_intensity > 0.0 && state.next_intensity < 1.0);
            }
        }
    }

    #[test]
    fn daily_return_is_intraday_sum() {
        let p = base();
        let mut rng = RngStream::new(36, 0).rng();
        let s = jumpdiff_simulate(&p, 50, 78, &mut rng).unwrap();
        for t in 0..50 {
            let day = s.day(t);
            assert!((day.iter().sum::<f64>() - s.returns[t]).abs() < 1e-12);
            assert_eq!(s.bv[t], bipower_variation(day).unwrap());
            assert!(s.jv[t] >= 0.0);
        }
    }

    #[test]
    fn measurement_density_integrates_jump_size() {
        let p = base();
        let s = JumpState {
            h: 0.2,
            jump: true,
            next_intensity: 0.1,
        };
        let v = 0.2f64.exp() + 1.44;
        let expect = stats::normal_ln_pdf(0.7, 0.0, v) + stats::normal_ln_pdf(0.1, 0.2, 0.09);
        assert!((p.log_measurement(&s, 0.7, 0.1) - expect).abs() < 1e-12);
    }
}
