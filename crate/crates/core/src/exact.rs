//! Grid posteriors and the exact predictives built on them.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{AbfError, Result};
use crate::models::{Inar1Params, TransitionCounts};
use crate::params::{ParamVector, PriorBox};
use crate::persist::{self, Container};
use crate::predictive::{average_pmfs, simulate_one_step, PredictiveDistribution, Provenance};
use crate::rng::{RngStream, StreamRng};

/// Weights below this fraction of the largest are treated as zero when a
/// refined grid is placed.
const REFINE_THRESHOLD: f64 = 1e-12;

/// Midpoint-rule posterior on a tensor grid.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    points: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    resolution: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Arc<[String]>,
}

pub fn min_resolution(dim: usize) -> usize {
    match dim {
        0 | 1 => 2,
        2 => 50,
        _ => 40,
    }
}

fn cell_midpoints(lower: &[f64], upper: &[f64], resolution: &[usize]) -> Vec<Vec<f64>> {
    lower
        .iter()
        .zip(upper)
        .zip(resolution)
        .map(|((lo, hi), &r)| {
            let w = (hi - lo) / r as f64;
            (0..r).map(|i| lo + (i as f64 + 0.5) * w).collect()
        })
        .collect()
}

impl GridPosterior {
    fn from_logliks(
        lls: Vec<f64>,
        axes: &[Vec<f64>],
        lower: Vec<f64>,
        upper: Vec<f64>,
        names: Arc<[String]>,
    ) -> Result<Self> {
        let dim = axes.len();
        let resolution: Vec<usize> = axes.iter().map(Vec::len).collect();
        let n = lls.len();
        let max = lls.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(AbfError::DegeneratePosterior);
        }
        let mut weights: Vec<f64> = lls
            .iter()
            .map(|&l| if l.is_nan() { 0.0 } else { (l - max).exp() })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut points = Vec::with_capacity(n * dim);
        for i in 0..n {
            points.extend(grid_point(axes, i));
        }
        Ok(Self::assemble(points, dim, weights, resolution, lower, upper, names))
    }

    fn assemble(
        points: Vec<f64>,
        dim: usize,
        weights: Vec<f64>,
        resolution: Vec<usize>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        names: Arc<[String]>,
    ) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self {
            points,
            dim,
            weights,
            cumulative,
            resolution,
            lower,
            upper,
            names,
        }
    }

    /// Posterior concentrated on a single point.
    pub fn point_mass(theta: &ParamVector) -> Self {
        let v = theta.values().to_vec();
        Self::assemble(
            v.clone(),
            v.len(),
            vec![1.0],
            vec![1; v.len()],
            v.clone(),
            v,
            theta.shared_names(),
        )
    }

    /// Finite mixture of points with the given (unnormalized) weights.
    pub fn from_points(points: Vec<ParamVector>, weights: Vec<f64>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(AbfError::EmptyPosterior);
        };
        if weights.len() != points.len() {
            return Err(AbfError::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(AbfError::DegeneratePosterior);
        }
        let dim = first.len();
        let names = first.shared_names();
        let flat: Vec<f64> = points.iter().flat_map(|p| p.values().iter().copied()).collect();
        let lower = (0..dim).map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min)).collect();
        let upper = (0..dim).map(|j| points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        Ok(Self::assemble(
            flat,
            dim,
            weights.iter().map(|w| w / total).collect(),
            vec![points.len()],
            lower,
            upper,
            names,
        ))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Bounds of the gridded region.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn param_vector(&self, i: usize) -> ParamVector {
        ParamVector::new(self.point(i).to_vec(), Arc::clone(&self.names)).expect("grid points are finite")
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (a, x) in m.iter_mut().zip(self.point(i)) {
                *a += w * x;
            }
        }
        m
    }

    pub fn mode_index(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Cell index drawn with probability equal to its weight.
    pub fn sample_index(&self, rng: &mut StreamRng) -> usize {
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative.partition_point(|c| *c <= u).min(self.len() - 1)
    }

    /// Per-axis cell indices of flat cell `i`.
    pub fn cell_coordinates(&self, i: usize) -> Vec<usize> {
        unravel(&self.resolution, i)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = vec![
            ("kind".to_string(), "grid_posterior".to_string()),
            ("names".to_string(), self.names.join(",")),
            ("resolution".to_string(), self.resolution.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")),
            ("lower".to_string(), persist::join_f64(&self.lower)),
            ("upper".to_string(), persist::join_f64(&self.upper)),
        ];
        persist::write_container(
            path,
            &Container {
                rows: self.len(),
                width_a: self.dim,
                width_b: 1,
                a: self.points.clone(),
                b: self.weights.clone(),
                meta,
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = persist::read_container(path)?;
        if c.require("kind")? != "grid_posterior" || c.width_b != 1 {
            return Err(AbfError::Format(format!("{} does not hold a grid posterior", path.display())));
        }
        let names: Arc<[String]> = c.require("names")?.split(',').map(str::to_string).collect();
        let resolution = c
            .require("resolution")?
            .split(',')
            .map(|s| s.parse::<usize>().map_err(|e| AbfError::Format(format!("resolution: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let lower = persist::parse_f64_list(c.require("lower")?)?;
        let upper = persist::parse_f64_list(c.require("upper")?)?;
        Ok(Self::assemble(c.a, c.width_a, c.b, resolution, lower, upper, names))
    }
}

fn unravel(resolution: &[usize], mut i: usize) -> Vec<usize> {
    let mut idx = vec![0; resolution.len()];
    for d in (0..resolution.len()).rev() {
        idx[d] = i % resolution[d];
        i /= resolution[d];
    }
    idx
}

fn grid_point(axes: &[Vec<f64>], i: usize) -> Vec<f64> {
    let res: Vec<usize> = axes.iter().map(Vec::len).collect();
    unravel(&res, i).iter().zip(axes).map(|(&k, a)| a[k]).collect()
}

fn evaluate_on_axes<F>(loglik: &F, prior: &PriorBox, axes: &[Vec<f64>]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n: usize = axes.iter().map(Vec::len).product();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let p = grid_point(axes, i);
            if prior.contains(&p) {
                loglik(&p)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Posterior on the midpoints of a tensor grid over the whole prior box.
pub fn grid_posterior<F>(loglik: F, prior: &PriorBox, resolution: &[usize]) -> Result<GridPosterior>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_resolution(prior, resolution)?;
    let axes = cell_midpoints(prior.lower(), prior.upper(), resolution);
    let lls = evaluate_on_axes(&loglik, prior, &axes);
    GridPosterior::from_logliks(lls, &axes, prior.lower().to_vec(), prior.upper().to_vec(), prior.shared_names())
}

fn check_resolution(prior: &PriorBox, resolution: &[usize]) -> Result<()> {
    if resolution.len() != prior.dim() {
        return Err(AbfError::DimensionMismatch {
            expected: prior.dim(),
            found: resolution.len(),
        });
    }
    let min = min_resolution(prior.dim());
    if let Some(r) = resolution.iter().find(|r| **r < min) {
        return Err(AbfError::InvalidParameter(format!(
            "grid resolution {r} is below {min} points per dimension"
        )));
    }
    Ok(())
}

/// Two-stage grid: a coarse grid over the whole prior locates the cells with
/// weight above `1e-12` of the largest; a second grid of `fine` points per
/// dimension then covers their bounding box widened by one coarse cell.
pub fn grid_posterior_refined<F>(loglik: F, prior: &PriorBox, coarse: &[usize], fine: &[usize]) -> Result<GridPosterior>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_resolution(prior, fine)?;
    let first = grid_posterior(&loglik, prior, coarse)?;
    let max = first.weights.iter().copied().fold(0.0, f64::max);
    let dim = prior.dim();
    let mut lo_idx = vec![usize::MAX; dim];
    let mut hi_idx = vec![0; dim];
    for (i, w) in first.weights.iter().enumerate() {
        if *w >= REFINE_THRESHOLD * max {
            for (d, k) in first.cell_coordinates(i).into_iter().enumerate() {
                lo_idx[d] = lo_idx[d].min(k);
                hi_idx[d] = hi_idx[d].max(k);
            }
        }
    }
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for d in 0..dim {
        let w = (prior.upper()[d] - prior.lower()[d]) / coarse[d] as f64;
        lower.push((prior.lower()[d] + w * lo_idx[d] as f64 - w).max(prior.lower()[d]));
        upper.push((prior.lower()[d] + w * (hi_idx[d] + 1) as f64 + w).min(prior.upper()[d]));
    }
    let axes = cell_midpoints(&lower, &upper, fine);
    let lls = evaluate_on_axes(&loglik, prior, &axes);
    GridPosterior::from_logliks(lls, &axes, lower, upper, prior.shared_names())
}

/// Stationary log-probability of `y_1` plus the log transition probabilities.
pub fn inar1_loglikelihood(params: &Inar1Params, y: &[u64]) -> Result<f64> {
    Ok(TransitionCounts::from_series(y)?.loglik(params))
}

/// `Σ_cells w · Pr(Y = k | y_last, θ_cell)`.
pub fn exact_predictive_discrete<F>(posterior: &GridPosterior, cond_pmf: F, conditioning_t: usize) -> Result<PredictiveDistribution>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let max = posterior.weights.iter().copied().fold(0.0, f64::max);
    let cells: Vec<usize> = (0..posterior.len())
        .filter(|&i| posterior.weights[i] > 1e-16 * max)
        .collect();
    let pmfs = cells
        .par_iter()
        .map(|&i| cond_pmf(posterior.point(i)).map(|p| (posterior.weights[i], p)))
        .collect::<Result<Vec<_>>>()?;
    PredictiveDistribution::from_pmf(average_pmfs(pmfs), Provenance::Exact, conditioning_t)
}

/// Cells drawn by weight, one `y_{T+1}` each from `one_step`, smoothed by a KDE.
pub fn exact_predictive_continuous<F>(
    posterior: &GridPosterior,
    one_step: F,
    n_draws: usize,
    conditioning_t: usize,
    stream: RngStream,
) -> Result<PredictiveDistribution>
where
    F: Fn(&[f64], &mut StreamRng) -> Result<f64> + Sync,
{
    if n_draws < 10_000 {
        return Err(AbfError::InvalidParameter(format!("exact predictive needs at least 10^4 draws, got {n_draws}")));
    }
    let mut rng = stream.rng();
    let thetas: Vec<ParamVector> = (0..n_draws)
        .map(|_| posterior.param_vector(posterior.sample_index(&mut rng)))
        .collect();
    let y = simulate_one_step(&thetas, one_step, 1, stream.child(u64::MAX))?;
    PredictiveDistribution::from_samples(y, Provenance::Exact, conditioning_t)
}

/// Weighted Gaussian one-step laws `(weight, mean, variance)` over the cells
/// that carry non-negligible weight.
pub fn gaussian_components<F>(posterior: &GridPosterior, one_step: F) -> Result<Vec<(f64, f64, f64)>>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync,
{
    let max = posterior.weights.iter().copied().fold(0.0, f64::max);
    (0..posterior.len())
        .into_par_iter()
        .filter(|&i| posterior.weights[i] > 1e-14 * max)
        .map(|i| one_step(posterior.point(i)).map(|(m, v)| (posterior.weights[i], m, v)))
        .collect()
}
