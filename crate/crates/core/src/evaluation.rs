//! Scoring rules, expanding-window evaluation and merging diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{build_reference_tables, select_k, tolerance_schedule, Scaling};
use crate::density::{GridDensity, DEFAULT_GRID_POINTS};
use crate::error::{AbfError, Result};
use crate::exact::{gaussian_components, grid_posterior_refined};
use crate::models::{ma2_loglikelihood, ma2_one_step, ma2_simulate, Ma2Params};
use crate::predictive::{PredictiveDistribution, Provenance};
use crate::rng::{splitmix64, RngStream};
use crate::summaries::{autocov_summary, Centering};

/// Smallest ordinate entering a log score.
pub const SCORE_FLOOR: f64 = 1e-300;

/// Log score with flooring; the flag reports whether the floor was hit.
pub fn log_score_checked(pred: &PredictiveDistribution, y: f64) -> (f64, bool) {
    let p = pred.ordinate(y);
    if p > SCORE_FLOOR {
        (p.ln(), false)
    } else {
        (SCORE_FLOOR.ln(), true)
    }
}

pub fn log_score(pred: &PredictiveDistribution, y: f64) -> f64 {
    log_score_checked(pred, y).0
}

/// `2 p(y) - ∫ p²` (or its discrete analogue).
pub fn quadratic_score(pred: &PredictiveDistribution, y: f64) -> f64 {
    2.0 * pred.ordinate(y) - pred.integral_of_square()
}

/// Positively oriented CRPS, `-∫ (F(z) - 1{z ≥ y})² dz`.
pub fn crps(pred: &PredictiveDistribution, y: f64) -> f64 {
    if let Some(p) = pred.pmf() {
        // the CDF is a step function, constant on [k, k+1)
        let top = (p.len() - 1).max(if y > 0.0 { y.ceil() as usize } else { 0 });
        let mut c = 0.0;
        let mut s = 0.0;
        for k in 0..=top {
            c += p.get(k).copied().unwrap_or(0.0);
            let ind = if k as f64 >= y { 1.0 } else { 0.0 };
            s += (c.min(1.0) - ind).powi(2);
        }
        return -s;
    }
    let grid = pred.grid().expect("continuous forms carry a grid");
    let h = pred.bandwidth();
    let a = grid.lower().min(y) - 6.0 * h;
    let b = grid.upper().max(y) + 6.0 * h;
    let n = 2 * ((b - a) / grid.cell_width()).ceil() as usize + 2;
    let left = simpson(|z| pred.cdf(z).powi(2), a, y, n);
    let right = simpson(|z| (1.0 - pred.cdf(z)).powi(2), y, b, n);
    -(left + right)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    /// Index of the scored observation (1-based, so `t = T + 1`).
    pub t: usize,
    pub y: f64,
    pub ls: f64,
    pub qs: f64,
    pub crps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreAverages {
    pub ls: f64,
    pub qs: f64,
    pub crps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_step: Vec<StepScore>,
    pub averages: ScoreAverages,
    pub start_t: usize,
    pub k: usize,
    pub provenance: Provenance,
    /// Steps whose log score hit the floor.
    pub floored: usize,
}

impl ScoreReport {
    pub fn from_steps(per_step: Vec<StepScore>, start_t: usize, provenance: Provenance, floored: usize) -> Result<Self> {
        if per_step.is_empty() {
            return Err(AbfError::InsufficientData { needed: 1, got: 0 });
        }
        let n = per_step.len() as f64;
        let averages = ScoreAverages {
            ls: per_step.iter().map(|s| s.ls).sum::<f64>() / n,
            qs: per_step.iter().map(|s| s.qs).sum::<f64>() / n,
            crps: per_step.iter().map(|s| s.crps).sum::<f64>() / n,
        };
        Ok(Self {
            k: per_step.len(),
            per_step,
            averages,
            start_t,
            provenance,
            floored,
        })
    }
}

pub fn score_step(pred: &PredictiveDistribution, y: f64, t: usize) -> (StepScore, bool) {
    let (ls, floored) = log_score_checked(pred, y);
    (
        StepScore {
            t,
            y,
            ls,
            qs: quadratic_score(pred, y),
            crps: crps(pred, y),
        },
        floored,
    )
}

/// For `k = 0..K`: condition on `y[..start_t + k]` and score against
/// `y[start_t + k]`. `forecaster(k, history)` runs the full inference for
/// window `k`; a failure aborts the report.
pub fn expanding_window_eval<F>(data: &[f64], forecaster: F, start_t: usize, k: usize) -> Result<ScoreReport>
where
    F: Fn(usize, &[f64]) -> Result<PredictiveDistribution> + Sync,
{
    let mut reports = expanding_window_eval_multi(data, |w, h| forecaster(w, h).map(|p| vec![p]), start_t, k)?;
    Ok(reports.remove(0))
}

/// [`expanding_window_eval`] for forecasters that emit several competing
/// predictives per window (sharing one simulation budget). Every window must
/// return the same number of predictives; report `j` scores predictive `j`.
pub fn expanding_window_eval_multi<F>(data: &[f64], forecaster: F, start_t: usize, k: usize) -> Result<Vec<ScoreReport>>
where
    F: Fn(usize, &[f64]) -> Result<Vec<PredictiveDistribution>> + Sync,
{
    if k == 0 {
        return Err(AbfError::InsufficientData { needed: 1, got: 0 });
    }
    if data.len() < start_t + k {
        return Err(AbfError::InsufficientData {
            needed: start_t + k,
            got: data.len(),
        });
    }
    let windows: Vec<Vec<(StepScore, bool, Provenance)>> = (0..k)
        .into_par_iter()
        .map(|w| {
            let t = start_t + w;
            let preds = forecaster(w, &data[..t]).map_err(|e| AbfError::WindowFailure {
                index: w,
                source: Box::new(e),
            })?;
            Ok(preds
                .iter()
                .map(|p| {
                    let (s, f) = score_step(p, data[t], t + 1);
                    (s, f, p.provenance())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let n = windows[0].len();
    if n == 0 || windows.iter().any(|w| w.len() != n) {
        return Err(AbfError::InvalidParameter("windows returned differing numbers of predictives".into()));
    }
    (0..n)
        .map(|j| {
            let provenance = windows[0][j].2;
            if windows.iter().any(|w| w[j].2 != provenance) {
                return Err(AbfError::InvalidParameter("windows produced predictives of mixed provenance".into()));
            }
            let floored = windows.iter().filter(|w| w[j].1).count();
            ScoreReport::from_steps(windows.iter().map(|w| w[j].0).collect(), start_t, provenance, floored)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MergingMetrics {
    /// Root of the integrated squared density difference.
    pub rmse: f64,
    /// Root of the integrated squared CDF difference.
    pub rmse_cdf: f64,
    pub tv: f64,
    pub hellinger: f64,
    /// `(∫ min(p, g))²`
    pub ovl: f64,
    pub ovl_unsquared: f64,
}

impl MergingMetrics {
    fn accumulate(&mut self, o: &MergingMetrics) {
        self.rmse += o.rmse;
        self.rmse_cdf += o.rmse_cdf;
        self.tv += o.tv;
        self.hellinger += o.hellinger;
        self.ovl += o.ovl;
        self.ovl_unsquared += o.ovl_unsquared;
    }

    fn scale(&mut self, f: f64) {
        self.rmse *= f;
        self.rmse_cdf *= f;
        self.tv *= f;
        self.hellinger *= f;
        self.ovl *= f;
        self.ovl_unsquared *= f;
    }
}

/// Trapezoid weights of a uniform grid with spacing `h`.
fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i == n - 1 { 0.5 * h } else { h }
}

fn metrics_from_masses(p: &[f64], g: &[f64], w: &[f64], cdf_p: &[f64], cdf_g: &[f64]) -> MergingMetrics {
    let mut sq = 0.0;
    let mut sq_cdf = 0.0;
    let mut abs = 0.0;
    let mut hel = 0.0;
    let mut ov = 0.0;
    for i in 0..p.len() {
        sq += w[i] * (p[i] - g[i]).powi(2);
        sq_cdf += w[i] * (cdf_p[i] - cdf_g[i]).powi(2);
        abs += w[i] * (p[i] - g[i]).abs();
        hel += w[i] * (p[i].sqrt() - g[i].sqrt()).powi(2);
        ov += w[i] * p[i].min(g[i]);
    }
    MergingMetrics {
        rmse: sq.sqrt(),
        rmse_cdf: sq_cdf.sqrt(),
        tv: 0.5 * abs,
        hellinger: (0.5 * hel).sqrt().min(1.0),
        ovl: ov * ov,
        ovl_unsquared: ov,
    }
}

/// Both predictives re-gridded onto a common uniform grid spanning the union
/// of their supports, renormalized there, and compared.
pub fn merging_metrics(p: &PredictiveDistribution, g: &PredictiveDistribution) -> Result<MergingMetrics> {
    match (p.pmf(), g.pmf()) {
        (Some(a), Some(b)) => {
            let n = a.len().max(b.len());
            let pa: Vec<f64> = (0..n).map(|k| a.get(k).copied().unwrap_or(0.0)).collect();
            let pb: Vec<f64> = (0..n).map(|k| b.get(k).copied().unwrap_or(0.0)).collect();
            let cum = |v: &[f64]| {
                let mut c = 0.0;
                v.iter()
                    .map(|x| {
                        c += x;
                        c
                    })
                    .collect::<Vec<_>>()
            };
            return Ok(metrics_from_masses(&pa, &pb, &vec![1.0; n], &cum(&pa), &cum(&pb)));
        }
        (None, None) => {}
        _ => {
            return Err(AbfError::DegenerateInput("cannot compare a pmf with a density".into()));
        }
    }
    let (gp, gg) = (p.grid().unwrap(), g.grid().unwrap());
    let lo = gp.lower().min(gg.lower());
    let hi = gp.upper().max(gg.upper());
    let finest = gp.cell_width().min(gg.cell_width());
    let n = (((hi - lo) / finest).ceil() as usize + 1).clamp(DEFAULT_GRID_POINTS, 8 * DEFAULT_GRID_POINTS);
    let grid = GridDensity::uniform_grid(lo, hi, n);
    let on_union = |d: &GridDensity| {
        let ord = grid.iter().map(|&x| d.ordinate_at(x)).collect();
        GridDensity::new(grid.clone(), ord)
    };
    let a = on_union(gp)?;
    let b = on_union(gg)?;
    let h = a.cell_width();
    let w: Vec<f64> = (0..n).map(|i| trapezoid_weight(i, n, h)).collect();
    let ca: Vec<f64> = grid.iter().map(|&x| a.cdf(x)).collect();
    let cb: Vec<f64> = grid.iter().map(|&x| b.cdf(x)).collect();
    Ok(metrics_from_masses(a.ordinates(), b.ordinates(), &w, &ca, &cb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergingRow {
    pub t: usize,
    pub metrics: MergingMetrics,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergingReport {
    pub spec_label: String,
    pub per_t: Vec<MergingRow>,
    pub replications: usize,
    pub failures: usize,
    /// `(replication, T, metrics)` for every successful replication.
    pub raw: Vec<(usize, usize, MergingMetrics)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergingConfig {
    pub theta0: [f64; 3],
    /// Largest autocovariance lag of each summary spec.
    pub lags: Vec<usize>,
    pub t_list: Vec<usize>,
    pub replications: usize,
    pub coarse_resolution: usize,
    pub fine_resolution: usize,
    pub seed: u64,
    /// Share of replications allowed to fail.
    pub failure_budget: f64,
}

fn ma2_mixture(y: &[f64], thetas: impl Iterator<Item = (f64, Vec<f64>)>) -> Result<Vec<(f64, f64, f64)>> {
    thetas
        .map(|(w, v)| ma2_one_step(&Ma2Params::from_slice(&v)?, y).map(|(m, s2)| (w, m, s2)))
        .collect()
}

fn merging_replication(cfg: &MergingConfig, rep: usize, t: usize) -> Result<Vec<MergingMetrics>> {
    let truth = Ma2Params::new(cfg.theta0[0], cfg.theta0[1], cfg.theta0[2])?;
    let stream = RngStream::new(cfg.seed, rep as u64).child(t as u64);
    let y = ma2_simulate(&truth, t, &mut stream.rng());
    let prior = Ma2Params::prior();

    let ll = |v: &[f64]| {
        Ma2Params::from_slice(v)
            .and_then(|p| ma2_loglikelihood(&p, &y))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let r3 = |r: usize| [r, r, r];
    let post = grid_posterior_refined(ll, &prior, &r3(cfg.coarse_resolution), &r3(cfg.fine_resolution))?;
    let exact_mix = gaussian_components(&post, |v| ma2_one_step(&Ma2Params::from_slice(v)?, &y))?;
    let exact = PredictiveDistribution::gaussian_mixture(&exact_mix, Provenance::Exact, t)?;

    let sched = tolerance_schedule(t)?;
    let labels: Vec<String> = cfg.lags.iter().map(|l| format!("autocov({l})")).collect();
    let lags = cfg.lags.clone();
    let tables = build_reference_tables(&prior, &labels, sched.n, splitmix64(stream.child(1).seed() ^ stream.child(1).stream_id()), |th, rng| {
        let p = Ma2Params::from_slice(th)?;
        let z = ma2_simulate(&p, t, rng);
        lags.iter().map(|&l| autocov_summary(&z, l, Centering::Uncentered)).collect()
    })?;
    let mut out = Vec::with_capacity(tables.len());
    for (table, &l) in tables.iter().zip(&cfg.lags) {
        let eta = autocov_summary(&y, l, Centering::Uncentered)?;
        let draws = select_k(table, &eta, sched.retained, Scaling::None)?;
        let mix = ma2_mixture(&y, draws.draws.iter().map(|d| (1.0, d.values().to_vec())))?;
        let abf = PredictiveDistribution::gaussian_mixture(&mix, Provenance::Abf, t)?;
        out.push(merging_metrics(&exact, &abf)?);
    }
    Ok(out)
}

/// Averages the merging metrics between the exact and ABF predictives of an
/// MA(2) over replications, for each summary spec and sample size. Both
/// predictives are Rao-Blackwellized Gaussian mixtures.
pub fn merging_experiment(cfg: &MergingConfig) -> Result<Vec<MergingReport>> {
    let n_specs = cfg.lags.len();
    let mut reports: Vec<MergingReport> = cfg
        .lags
        .iter()
        .map(|l| MergingReport {
            spec_label: format!("autocov({l})"),
            per_t: Vec::new(),
            replications: cfg.replications,
            failures: 0,
            raw: Vec::new(),
        })
        .collect();
    let mut failures = 0usize;
    for &t in &cfg.t_list {
        let mut sums = vec![MergingMetrics::default(); n_specs];
        let mut ok = 0usize;
        for rep in 0..cfg.replications {
            match merging_replication(cfg, rep, t) {
                Ok(ms) => {
                    ok += 1;
                    for (s, m) in ms.iter().enumerate() {
                        sums[s].accumulate(m);
                        reports[s].raw.push((rep, t, *m));
                    }
                }
                Err(e) => {
                    failures += 1;
                    if failures as f64 > cfg.failure_budget * (cfg.replications * cfg.t_list.len()) as f64 {
                        return Err(e);
                    }
                }
            }
        }
        for (s, mut m) in sums.into_iter().enumerate() {
            m.scale(1.0 / ok.max(1) as f64);
            reports[s].per_t.push(MergingRow {
                t,
                metrics: m,
                replications: ok,
            });
        }
    }
    for r in &mut reports {
        r.failures = failures;
    }
    Ok(reports)
}
