//! One-step-ahead predictive distributions built from parameter draws.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::AbcDrawSet;
use crate::density::{BivariateKde, GridDensity, Kde, DEFAULT_GRID_POINTS};
use crate::error::{AbfError, Result};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::filtering::{bootstrap_pf, bootstrap_pf_inspect, forward_simulate_states, StateMethod, StateSpaceModel};
use crate::params::ParamVector;
use crate::rng::{RngStream, StreamRng};
use crate::stats;

/// Tolerance on the total mass of a pmf.
pub const PMF_MASS_TOLERANCE: f64 = 1e-10;
/// Tolerance on the total mass of a tabulated density.
pub const GRID_MASS_TOLERANCE: f64 = 1e-6;
/// Largest share of parameter draws that may be skipped on particle degeneracy.
pub const MAX_SKIP_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Abf,
    Exact,
    AbfForwardSim,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Abf => "abf",
            Provenance::Exact => "exact",
            Provenance::AbfForwardSim => "abf_forward_sim",
        }
    }
}

#[derive(Debug, Clone)]
pub enum PredictiveForm {
    /// Mass at `0, 1, ..., len - 1`.
    Pmf(Vec<f64>),
    SampleKde { kde: Kde, grid: GridDensity },
    Grid(GridDensity),
}

#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    form: PredictiveForm,
    provenance: Provenance,
    conditioning_t: usize,
}

impl PredictiveDistribution {
    pub fn from_pmf(pmf: Vec<f64>, provenance: Provenance, conditioning_t: usize) -> Result<Self> {
        if pmf.is_empty() || pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(AbfError::DegenerateInput("pmf entries must be finite and nonnegative".into()));
        }
        let mass: f64 = pmf.iter().sum();
        if (mass - 1.0).abs() > PMF_MASS_TOLERANCE {
            return Err(AbfError::NumericalFailure(format!("predictive pmf has mass {mass}")));
        }
        Ok(Self {
            form: PredictiveForm::Pmf(pmf),
            provenance,
            conditioning_t,
        })
    }

    /// Gaussian KDE of `samples`, tabulated on the default grid.
    pub fn from_samples(samples: Vec<f64>, provenance: Provenance, conditioning_t: usize) -> Result<Self> {
        let kde = Kde::new(samples)?;
        Self::from_kde(kde, provenance, conditioning_t)
    }

    pub fn from_kde(kde: Kde, provenance: Provenance, conditioning_t: usize) -> Result<Self> {
        let grid = kde.to_grid(DEFAULT_GRID_POINTS)?;
        check_grid_mass(&grid)?;
        Ok(Self {
            form: PredictiveForm::SampleKde { kde, grid },
            provenance,
            conditioning_t,
        })
    }

    pub fn from_grid(grid: GridDensity, provenance: Provenance, conditioning_t: usize) -> Result<Self> {
        check_grid_mass(&grid)?;
        Ok(Self {
            form: PredictiveForm::Grid(grid),
            provenance,
            conditioning_t,
        })
    }

    /// Tabulated mixture `Σ w_i N(m_i, v_i)`; weights are normalized here.
    pub fn gaussian_mixture(components: &[(f64, f64, f64)], provenance: Provenance, conditioning_t: usize) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.0).sum();
        if components.is_empty() || !(total > 0.0) {
            return Err(AbfError::EmptyPosterior);
        }
        let lo = components
            .iter()
            .filter(|c| c.0 > 0.0)
            .map(|c| c.1 - 8.0 * c.2.sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = components
            .iter()
            .filter(|c| c.0 > 0.0)
            .map(|c| c.1 + 8.0 * c.2.sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        let grid = GridDensity::uniform_grid(lo, hi, DEFAULT_GRID_POINTS);
        let ord: Vec<f64> = grid
            .par_iter()
            .map(|&x| {
                components
                    .iter()
                    .filter(|c| c.0 > 0.0)
                    .map(|&(w, m, v)| w * stats::normal_pdf(x, m, v.sqrt()))
                    .sum::<f64>()
                    / total
            })
            .collect();
        Self::from_grid(GridDensity::new(grid, ord)?, provenance, conditioning_t)
    }

    pub fn form(&self) -> &PredictiveForm {
        &self.form
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn conditioning_t(&self) -> usize {
        self.conditioning_t
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.form, PredictiveForm::Pmf(_))
    }

    pub fn pmf(&self) -> Option<&[f64]> {
        match &self.form {
            PredictiveForm::Pmf(p) => Some(p),
            _ => None,
        }
    }

    /// Tabulated density for continuous forms.
    pub fn grid(&self) -> Option<&GridDensity> {
        match &self.form {
            PredictiveForm::Pmf(_) => None,
            PredictiveForm::SampleKde { grid, .. } | PredictiveForm::Grid(grid) => Some(grid),
        }
    }

    /// Kernel bandwidth, or the grid spacing for tabulated densities.
    pub fn bandwidth(&self) -> f64 {
        match &self.form {
            PredictiveForm::Pmf(_) => 1.0,
            PredictiveForm::SampleKde { kde, .. } => kde.bandwidth(),
            PredictiveForm::Grid(g) => g.cell_width(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.form {
            PredictiveForm::Pmf(p) => p.iter().sum(),
            PredictiveForm::SampleKde { grid, .. } | PredictiveForm::Grid(grid) => grid.integral(),
        }
    }

    /// Mass at `y` (discrete) or density ordinate at `y` (continuous).
    pub fn ordinate(&self, y: f64) -> f64 {
        match &self.form {
            PredictiveForm::Pmf(p) => {
                if y >= 0.0 && y.fract() == 0.0 && (y as usize) < p.len() {
                    p[y as usize]
                } else {
                    0.0
                }
            }
            PredictiveForm::SampleKde { kde, .. } => kde.ordinate(y),
            PredictiveForm::Grid(g) => g.ordinate_at(y),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match &self.form {
            PredictiveForm::Pmf(p) => {
                if y < 0.0 {
                    0.0
                } else {
                    let k = (y.floor() as usize).min(p.len() - 1);
                    p[..=k].iter().sum::<f64>().min(1.0)
                }
            }
            PredictiveForm::SampleKde { grid, .. } | PredictiveForm::Grid(grid) => grid.cdf(y),
        }
    }

    /// `Σ p(k)²` or `∫ p²`.
    pub fn integral_of_square(&self) -> f64 {
        match &self.form {
            PredictiveForm::Pmf(p) => p.iter().map(|x| x * x).sum(),
            PredictiveForm::SampleKde { grid, .. } | PredictiveForm::Grid(grid) => grid.integral_of_square(),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.form {
            PredictiveForm::Pmf(p) => p.iter().enumerate().map(|(k, m)| k as f64 * m).sum(),
            PredictiveForm::SampleKde { kde, .. } => stats::mean(kde.samples()),
            PredictiveForm::Grid(g) => g.mean(),
        }
    }

    /// Writes `point,ordinate,cdf` rows under a `#`-prefixed metadata header.
    pub fn write_csv(&self, path: &Path, meta: &[(&str, String)]) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# provenance = {}", self.provenance.label())?;
        writeln!(w, "# conditioning_t = {}", self.conditioning_t)?;
        for (k, v) in meta {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "point,ordinate,cdf")?;
        match &self.form {
            PredictiveForm::Pmf(p) => {
                let mut c = 0.0;
                for (k, m) in p.iter().enumerate() {
                    c += m;
                    writeln!(w, "{k},{m:.12e},{:.12e}", c.min(1.0))?;
                }
            }
            PredictiveForm::SampleKde { grid, .. } | PredictiveForm::Grid(grid) => {
                for (x, o) in grid.grid().iter().zip(grid.ordinates()) {
                    writeln!(w, "{x:.12e},{o:.12e},{:.12e}", grid.cdf(*x))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid_mass(grid: &GridDensity) -> Result<()> {
    let m = grid.integral();
    if (m - 1.0).abs() > GRID_MASS_TOLERANCE {
        return Err(AbfError::NumericalFailure(format!("predictive density has mass {m}")));
    }
    Ok(())
}

/// Equal-weight average of pmfs of possibly different lengths.
pub(crate) fn average_pmfs<I: IntoIterator<Item = (f64, Vec<f64>)>>(weighted: I) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut total = 0.0;
    for (w, p) in weighted {
        if acc.len() < p.len() {
            acc.resize(p.len(), 0.0);
        }
        for (a, x) in acc.iter_mut().zip(&p) {
            *a += w * x;
        }
        total += w;
    }
    acc.iter_mut().for_each(|a| *a /= total);
    acc
}

/// Rao-Blackwellized predictive: the average of the conditional pmfs over
/// the retained draws.
pub fn abf_predictive_discrete<F>(draws: &AbcDrawSet, cond_pmf: F, conditioning_t: usize) -> Result<PredictiveDistribution>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if draws.is_empty() {
        return Err(AbfError::EmptyPosterior);
    }
    let pmfs = draws
        .draws
        .par_iter()
        .map(|d| cond_pmf(d.values()).map(|p| (1.0, p)))
        .collect::<Result<Vec<_>>>()?;
    PredictiveDistribution::from_pmf(average_pmfs(pmfs), Provenance::Abf, conditioning_t)
}

/// `m` draws of `y_{T+1}` per parameter draw, pooled and smoothed by a KDE.
/// Draw `i` simulates on stream `stream.child(i)`.
pub fn simulate_one_step<F>(thetas: &[ParamVector], one_step: F, m: usize, stream: RngStream) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut StreamRng) -> Result<f64> + Sync,
{
    if thetas.is_empty() {
        return Err(AbfError::EmptyPosterior);
    }
    let m = m.max(1);
    let per: Vec<Vec<f64>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, th)| {
            let mut rng = stream.child(i as u64).rng();
            (0..m).map(|_| one_step(th.values(), &mut rng)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub fn abf_predictive_continuous<F>(
    draws: &AbcDrawSet,
    one_step: F,
    m: usize,
    conditioning_t: usize,
    stream: RngStream,
) -> Result<PredictiveDistribution>
where
    F: Fn(&[f64], &mut StreamRng) -> Result<f64> + Sync,
{
    let y = simulate_one_step(&draws.draws, one_step, m, stream)?;
    PredictiveDistribution::from_samples(y, Provenance::Abf, conditioning_t)
}

/// Pooled one-step draws from a state-space model, with the count of
/// parameter draws skipped after particle degeneracy.
#[derive(Debug, Clone)]
pub struct StateSpaceDraws<O> {
    pub draws: Vec<O>,
    pub skipped: usize,
}

/// For each parameter draw: obtain `m` terminal states (weighted draws from
/// the filtered cloud, or independent unconditional simulations), advance
/// each one step and draw an observation.
#[allow(clippy::too_many_arguments)]
pub fn state_space_one_step<M, B, O, T>(
    thetas: &[ParamVector],
    bind: B,
    observe: O,
    method: StateMethod,
    n_particles: usize,
    m: usize,
    stream: RngStream,
) -> Result<StateSpaceDraws<T>>
where
    M: StateSpaceModel,
    B: Fn(&[f64]) -> Result<M> + Sync,
    O: Fn(&M, &M::State, &mut StreamRng) -> T + Sync,
    T: Send,
{
    if thetas.is_empty() {
        return Err(AbfError::EmptyPosterior);
    }
    let m = m.max(1);
    let per: Vec<Option<Vec<T>>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, th)| {
            let mut rng = stream.child(i as u64).rng();
            let model = bind(th.values())?;
            let terminal: Vec<M::State> = match method {
                StateMethod::ParticleFilter => match bootstrap_pf(&model, n_particles, &mut rng) {
                    Ok(cloud) => (0..m).map(|_| cloud.sample(&mut rng)).collect(),
                    Err(AbfError::ParticleDegeneracy { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                },
                StateMethod::ForwardSimulation => (0..m)
                    .map(|_| forward_simulate_states(&model, model.len(), &mut rng))
                    .collect(),
            };
            Ok(Some(
                terminal
                    .iter()
                    .map(|s| {
                        let next = model.transition(s, &mut rng);
                        observe(&model, &next, &mut rng)
                    })
                    .collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let skipped = per.iter().filter(|p| p.is_none()).count();
    if skipped as f64 > MAX_SKIP_SHARE * thetas.len() as f64 {
        return Err(AbfError::NumericalFailure(format!(
            "particle degeneracy for {skipped} of {} parameter draws",
            thetas.len()
        )));
    }
    Ok(StateSpaceDraws {
        draws: per.into_iter().flatten().flatten().collect(),
        skipped,
    })
}

/// Particle-filter one-step draws at several forecast origins from a single
/// pass per parameter draw. Origin `t` conditions on the first `t`
/// observations of the bound model; the result is ordered like `origins`.
#[allow(clippy::too_many_arguments)]
pub fn state_space_one_step_origins<M, B, O, T>(
    thetas: &[ParamVector],
    bind: B,
    observe: O,
    n_particles: usize,
    m: usize,
    origins: &[usize],
    stream: RngStream,
) -> Result<Vec<StateSpaceDraws<T>>>
where
    M: StateSpaceModel,
    B: Fn(&[f64]) -> Result<M> + Sync,
    O: Fn(&M, &M::State, &mut StreamRng) -> T + Sync,
    T: Send,
{
    if thetas.is_empty() {
        return Err(AbfError::EmptyPosterior);
    }
    if origins.contains(&0) {
        return Err(AbfError::InvalidParameter("forecast origins must be positive".into()));
    }
    let m = m.max(1);
    let per: Vec<Option<Vec<Vec<T>>>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, th)| {
            let mut rng = stream.child(i as u64).rng();
            let mut draw_rng = stream.child(i as u64).child(1).rng();
            let model = bind(th.values())?;
            if let Some(&t) = origins.iter().find(|&&t| t > model.len()) {
                return Err(AbfError::InsufficientData {
                    needed: t,
                    got: model.len(),
                });
            }
            let mut out: Vec<Vec<T>> = (0..origins.len()).map(|_| Vec::with_capacity(m)).collect();
            let res = bootstrap_pf_inspect(&model, n_particles, &mut rng, |t, particles, weights| {
                for (slot, &o) in out.iter_mut().zip(origins) {
                    if o == t + 1 {
                        let idx = WeightedIndex::new(weights).expect("weights are normalized");
                        for _ in 0..m {
                            let s = &particles[idx.sample(&mut draw_rng)];
                            let next = model.transition(s, &mut draw_rng);
                            slot.push(observe(&model, &next, &mut draw_rng));
                        }
                    }
                }
            });
            match res {
                Ok(_) => Ok(Some(out)),
                Err(AbfError::ParticleDegeneracy { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let skipped = per.iter().filter(|p| p.is_none()).count();
    if skipped as f64 > MAX_SKIP_SHARE * thetas.len() as f64 {
        return Err(AbfError::NumericalFailure(format!(
            "particle degeneracy for {skipped} of {} parameter draws",
            thetas.len()
        )));
    }
    let mut result: Vec<StateSpaceDraws<T>> = origins
        .iter()
        .map(|_| StateSpaceDraws {
            draws: Vec::with_capacity(m * thetas.len()),
            skipped,
        })
        .collect();
    for per_theta in per.into_iter().flatten() {
        for (slot, draws) in result.iter_mut().zip(per_theta) {
            slot.draws.extend(draws);
        }
    }
    Ok(result)
}

pub fn state_method_provenance(method: StateMethod) -> Provenance {
    match method {
        StateMethod::ParticleFilter => Provenance::Abf,
        StateMethod::ForwardSimulation => Provenance::AbfForwardSim,
    }
}

/// Joint predictive of a bivariate observation with its two marginals.
#[derive(Debug, Clone)]
pub struct JointPredictive {
    pub joint: BivariateKde,
    pub first: PredictiveDistribution,
    pub second: PredictiveDistribution,
}

impl JointPredictive {
    pub fn from_pairs(pairs: Vec<(f64, f64)>, provenance: Provenance, conditioning_t: usize) -> Result<Self> {
        let joint = BivariateKde::new(pairs)?;
        let first = PredictiveDistribution::from_kde(joint.marginal(0)?, provenance, conditioning_t)?;
        let second = PredictiveDistribution::from_kde(joint.marginal(1)?, provenance, conditioning_t)?;
        Ok(Self { joint, first, second })
    }
}
