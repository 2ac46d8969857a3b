//! Bootstrap particle filter, forward state simulation and particle-marginal
//! Metropolis–Hastings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AbfError, Result};
use crate::models::{JumpDiffParams, JumpState, SvParams};
use crate::params::{ParamVector, PriorBox};
use crate::rng::{RngStream, StreamRng};
use crate::stats::{self, std_normal};

pub const DEFAULT_PREDICTIVE_PARTICLES: usize = 2000;
pub const DEFAULT_PMMH_PARTICLES: usize = 500;

/// A state-space model bound to one parameter value and one observed series.
/// Time index `t` runs over `0..len()`; the state before the first
/// observation comes from `initial`.
#[allow(clippy::len_without_is_empty)]
pub trait StateSpaceModel {
    type State: Clone + Send + Sync;

    fn len(&self) -> usize;
    fn initial(&self, rng: &mut StreamRng) -> Self::State;
    fn transition(&self, s: &Self::State, rng: &mut StreamRng) -> Self::State;
    fn log_measurement(&self, s: &Self::State, t: usize) -> f64;
}

/// Stochastic volatility; the state is `ln V_t`.
pub struct SvStateSpace<'a> {
    pub params: SvParams,
    pub y: &'a [f64],
}

impl StateSpaceModel for SvStateSpace<'_> {
    type State = f64;

    fn len(&self) -> usize {
        self.y.len()
    }

    fn initial(&self, rng: &mut StreamRng) -> f64 {
        self.params.draw_stationary_log_v(rng)
    }

    fn transition(&self, s: &f64, rng: &mut StreamRng) -> f64 {
        self.params.step_log_v(*s, rng)
    }

    fn log_measurement(&self, s: &f64, t: usize) -> f64 {
        stats::normal_ln_pdf(self.y[t], 0.0, s.exp().max(1e-300))
    }
}

/// Jump-diffusion with state `(h_t, ΔN_t)` and the intensity carried along
/// deterministically.
pub struct JumpDiffStateSpace<'a> {
    pub params: JumpDiffParams,
    pub returns: &'a [f64],
    pub ln_bv: &'a [f64],
}

impl StateSpaceModel for JumpDiffStateSpace<'_> {
    type State = JumpState;

    fn len(&self) -> usize {
        self.returns.len()
    }

    fn initial(&self, _rng: &mut StreamRng) -> JumpState {
        self.params.initial_state()
    }

    fn transition(&self, s: &JumpState, rng: &mut StreamRng) -> JumpState {
        self.params.step_state(s, rng)
    }

    fn log_measurement(&self, s: &JumpState, t: usize) -> f64 {
        self.params.log_measurement(s, self.returns[t], self.ln_bv[t])
    }
}

/// `x_t = φ x_{t-1} + √q w_t`, `y_t = x_t + √r v_t`, stationary start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussian {
    pub phi: f64,
    pub q: f64,
    pub r: f64,
}

impl LinearGaussian {
    pub fn stationary_variance(&self) -> f64 {
        self.q / (1.0 - self.phi * self.phi)
    }

    pub fn simulate(&self, len: usize, rng: &mut StreamRng) -> Vec<f64> {
        let mut x = self.stationary_variance().sqrt() * std_normal(rng);
        (0..len)
            .map(|_| {
                x = self.phi * x + self.q.sqrt() * std_normal(rng);
                x + self.r.sqrt() * std_normal(rng)
            })
            .collect()
    }

    pub fn bind<'a>(&self, y: &'a [f64]) -> LinearGaussianStateSpace<'a> {
        LinearGaussianStateSpace { model: *self, y }
    }

    /// Exact log-likelihood and the predictive mean/variance of the next
    /// observation.
    pub fn kalman(&self, y: &[f64]) -> (f64, f64, f64) {
        let (mut m, mut p) = (0.0, self.stationary_variance());
        let mut ll = 0.0;
        for &obs in y {
            let mp = self.phi * m;
            let pp = self.phi * self.phi * p + self.q;
            let s = pp + self.r;
            ll += stats::normal_ln_pdf(obs, mp, s);
            let k = pp / s;
            m = mp + k * (obs - mp);
            p = (1.0 - k) * pp;
        }
        let mp = self.phi * m;
        (ll, mp, self.phi * self.phi * p + self.q + self.r)
    }
}

pub struct LinearGaussianStateSpace<'a> {
    pub model: LinearGaussian,
    pub y: &'a [f64],
}

impl StateSpaceModel for LinearGaussianStateSpace<'_> {
    type State = f64;

    fn len(&self) -> usize {
        self.y.len()
    }

    fn initial(&self, rng: &mut StreamRng) -> f64 {
        self.model.stationary_variance().sqrt() * std_normal(rng)
    }

    fn transition(&self, s: &f64, rng: &mut StreamRng) -> f64 {
        self.model.phi * s + self.model.q.sqrt() * std_normal(rng)
    }

    fn log_measurement(&self, s: &f64, t: usize) -> f64 {
        stats::normal_ln_pdf(self.y[t], *s, self.model.r)
    }
}

/// Weighted particles at the last filtered time.
#[derive(Debug, Clone)]
pub struct ParticleCloud<S> {
    pub particles: Vec<S>,
    pub weights: Vec<f64>,
    /// Running sum of log mean unnormalized weights.
    pub loglik: f64,
}

impl<S: Clone> ParticleCloud<S> {
    /// One particle drawn by weight.
    pub fn sample(&self, rng: &mut StreamRng) -> S {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (p, w) in self.particles.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return p.clone();
            }
        }
        self.particles.last().expect("cloud is nonempty").clone()
    }
}

/// Multinomial resampling via sorted uniforms generated from exponential
/// spacings; returns ancestor indices.
fn multinomial_ancestors(weights: &[f64], rng: &mut StreamRng) -> Vec<usize> {
    let n = weights.len();
    let mut spacings: Vec<f64> = (0..=n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = spacings.iter().sum();
    let mut acc = 0.0;
    for s in &mut spacings {
        acc += *s;
        *s = acc / total;
    }
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for &u in &spacings[..n] {
        while u > cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// Propagate, weight and resample (multinomially, every step). The returned
/// cloud is weighted at the final time and not resampled.
pub fn bootstrap_pf<M: StateSpaceModel>(model: &M, n_particles: usize, rng: &mut StreamRng) -> Result<ParticleCloud<M::State>> {
    bootstrap_pf_inspect(model, n_particles, rng, |_, _, _| {})
}

/// [`bootstrap_pf`] that hands the weighted cloud at every `t` to `inspect`
/// before resampling, for predictives at several origins from one pass.
pub fn bootstrap_pf_inspect<M, F>(
    model: &M,
    n_particles: usize,
    rng: &mut StreamRng,
    mut inspect: F,
) -> Result<ParticleCloud<M::State>>
where
    M: StateSpaceModel,
    F: FnMut(usize, &[M::State], &[f64]),
{
    if n_particles < 100 {
        return Err(AbfError::InvalidParameter(format!(
            "particle filter needs at least 100 particles, got {n_particles}"
        )));
    }
    let mut particles: Vec<M::State> = (0..n_particles).map(|_| model.initial(rng)).collect();
    let mut weights = vec![1.0 / n_particles as f64; n_particles];
    let mut logw = vec![0.0; n_particles];
    let mut loglik = 0.0;
    for t in 0..model.len() {
        if t > 0 {
            let anc = multinomial_ancestors(&weights, rng);
            particles = anc.iter().map(|&a| particles[a].clone()).collect();
        }
        for (p, lw) in particles.iter_mut().zip(logw.iter_mut()) {
            *p = model.transition(p, rng);
            *lw = model.log_measurement(p, t);
        }
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(AbfError::ParticleDegeneracy { t });
        }
        let mut sum = 0.0;
        for (w, lw) in weights.iter_mut().zip(&logw) {
            *w = (lw - max).exp();
            sum += *w;
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        loglik += max + (sum / n_particles as f64).ln();
        inspect(t, &particles, &weights);
    }
    Ok(ParticleCloud {
        particles,
        weights,
        loglik,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMethod {
    ParticleFilter,
    ForwardSimulation,
}

#[derive(Debug, Clone)]
pub struct StatePosteriorDraws<S> {
    pub terminal_states: Vec<S>,
    pub method: StateMethod,
}

/// Unconditional simulation of the state to time `t`, ignoring observations.
pub fn forward_simulate_states<M: StateSpaceModel>(model: &M, t: usize, rng: &mut StreamRng) -> M::State {
    let mut s = model.initial(rng);
    for _ in 0..t {
        s = model.transition(&s, rng);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmhConfig {
    /// Post-pilot chain length; the first half is discarded.
    pub n_iter: usize,
    /// Draws kept after burn-in, by even thinning.
    pub n_keep: usize,
    pub pilot_iter: usize,
    pub max_pilot_rounds: usize,
    pub initial_sd: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PmmhOutput {
    pub draws: Vec<ParamVector>,
    pub acceptance: f64,
    pub pilot_acceptance: f64,
    pub proposal_sd: Vec<f64>,
    /// Post burn-in chain before thinning, one row per iteration.
    pub chain: Vec<Vec<f64>>,
}

struct Chain<'a, L> {
    loglik: &'a L,
    prior: &'a PriorBox,
    current: Vec<f64>,
    current_ll: f64,
}

impl<L> Chain<'_, L>
where
    L: Fn(&[f64], &mut StreamRng) -> Result<f64>,
{
    fn step(&mut self, sd: &[f64], rng: &mut StreamRng) -> bool {
        let prop: Vec<f64> = self
            .current
            .iter()
            .zip(sd)
            .map(|(c, s)| c + s * std_normal(rng))
            .collect();
        if !self.prior.contains(&prop) {
            return false;
        }
        let ll = match (self.loglik)(&prop, rng) {
            Ok(v) if v.is_finite() => v,
            _ => return false,
        };
        // flat prior inside the support
        let accept = ll - self.current_ll >= 0.0 || rng.random::<f64>().ln() < ll - self.current_ll;
        if accept {
            self.current = prop;
            self.current_ll = ll;
        }
        accept
    }
}

/// Random-walk PMMH under a (possibly truncated) uniform prior. `loglik`
/// returns an unbiased-in-expectation likelihood estimate on the log scale.
/// The proposal scale is adapted on pilot batches until acceptance lies in
/// `[0.1, 0.5]`.
pub fn pmmh_sample<L>(loglik: L, prior: &PriorBox, start: &[f64], cfg: &PmmhConfig, stream: RngStream) -> Result<PmmhOutput>
where
    L: Fn(&[f64], &mut StreamRng) -> Result<f64>,
{
    if cfg.n_iter < 2000 {
        return Err(AbfError::InvalidParameter(format!("PMMH needs at least 2000 iterations, got {}", cfg.n_iter)));
    }
    if cfg.initial_sd.len() != prior.dim() || start.len() != prior.dim() {
        return Err(AbfError::DimensionMismatch {
            expected: prior.dim(),
            found: cfg.initial_sd.len().min(start.len()),
        });
    }
    if !prior.contains(start) {
        return Err(AbfError::InvalidParameter("PMMH start lies outside the prior".into()));
    }
    let mut rng = stream.rng();
    let current_ll = loglik(start, &mut rng)?;
    let mut chain = Chain {
        loglik: &loglik,
        prior,
        current: start.to_vec(),
        current_ll,
    };
    let mut sd = cfg.initial_sd.clone();
    let mut pilot_acc = 0.0;
    for _ in 0..cfg.max_pilot_rounds.max(1) {
        let acc = (0..cfg.pilot_iter).filter(|_| chain.step(&sd, &mut rng)).count();
        pilot_acc = acc as f64 / cfg.pilot_iter.max(1) as f64;
        if (0.1..=0.5).contains(&pilot_acc) {
            break;
        }
        let factor = if pilot_acc < 0.1 { (pilot_acc / 0.25).max(0.2) } else { (pilot_acc / 0.25).min(3.0) };
        sd.iter_mut().for_each(|s| *s *= factor);
    }
    if pilot_acc < 0.01 {
        return Err(AbfError::TuningFailure { acceptance: pilot_acc });
    }
    let mut kept = Vec::with_capacity(cfg.n_iter - cfg.n_iter / 2);
    let mut accepted = 0usize;
    for i in 0..cfg.n_iter {
        if chain.step(&sd, &mut rng) {
            accepted += 1;
        }
        if i >= cfg.n_iter / 2 {
            kept.push(chain.current.clone());
        }
    }
    let n_keep = cfg.n_keep.clamp(1, kept.len());
    let draws = (0..n_keep)
        .map(|k| prior.vector(kept[k * kept.len() / n_keep].clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(PmmhOutput {
        draws,
        acceptance: accepted as f64 / cfg.n_iter as f64,
        pilot_acceptance: pilot_acc,
        proposal_sd: sd,
        chain: kept,
    })
}

/// Potential scale reduction factor for one scalar across chains of equal length.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) as f64;
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let grand = stats::mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains.iter().map(|c| stats::sample_variance(c)).sum::<f64>() / m;
    let var = (n - 1.0) / n * w + b / n;
    (var / w).sqrt()
}
