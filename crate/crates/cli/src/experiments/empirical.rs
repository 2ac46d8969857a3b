//! Jump-diffusion ABF on daily returns and log bipower variation: posterior
//! summaries per auxiliary model and one-step scores for both series.

use abf_core::abc::{build_reference_tables, select_k, AbcDrawSet, Scaling};
use abf_core::evaluation::{score_step, ScoreReport};
use abf_core::filtering::{JumpDiffStateSpace, StateMethod};
use abf_core::models::{jumpdiff_simulate, JumpDiffParams};
use abf_core::params::ParamVector;
use abf_core::predictive::{state_space_one_step, state_space_one_step_origins, JointPredictive, Provenance, StateSpaceDraws};
use abf_core::rng::{RngStream, StreamRng};
use abf_core::stats;
use abf_core::summaries::{build_summary, fit_aux_qmle, AuxData, AuxFit, SummaryInput, SummarySpec};
use anyhow::{ensure, Context, Result};
use serde::Serialize;

use super::derive_seed;
use crate::config::{EmpiricalSettings, ExperimentConfig};
use crate::data::{ingest_intraday_csv, MarketDataBundle};
use crate::hpd::hpd_interval;
use crate::output::{num, ArtifactWriter};

/// Posterior means under the GARCH-N summary on the S&P 500 sample.
pub const THETA0: [f64; 12] = [-0.02, 1.26, 0.45, -0.04, 0.94, 0.20, 1.76, 0.11, 0.69, 0.12, 0.07, 1.21];

pub const HPD_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorRow {
    pub spec: String,
    pub param: String,
    pub mean: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecScores {
    pub spec: String,
    pub returns: ScoreReport,
    pub ln_bv: ScoreReport,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalRun {
    pub seed: u64,
    pub estimation_len: usize,
    pub n_windows: usize,
    pub dropped_days: usize,
    pub posterior: Vec<PosteriorRow>,
    pub scores: Vec<SpecScores>,
    /// Whether every retained draw lies in the prior support.
    pub draws_in_bounds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalOutcome {
    pub per_seed: Vec<EmpiricalRun>,
}

impl EmpiricalOutcome {
    pub fn emit(&self, w: &mut ArtifactWriter) -> Result<()> {
        let mut post = Vec::new();
        let mut scores = Vec::new();
        for run in &self.per_seed {
            for r in &run.posterior {
                post.push(vec![
                    run.seed.to_string(),
                    r.spec.clone(),
                    r.param.clone(),
                    num(r.mean),
                    num(r.hpd_lo),
                    num(r.hpd_hi),
                ]);
            }
            for s in &run.scores {
                let (a, b) = (&s.returns.averages, &s.ln_bv.averages);
                scores.push(vec![
                    run.seed.to_string(),
                    s.spec.clone(),
                    num(a.ls),
                    num(a.qs),
                    num(a.crps),
                    num(b.ls),
                    num(b.qs),
                    num(b.crps),
                ]);
                let tag = super::file_label(&s.spec);
                w.score_steps(&format!("scores_{tag}_returns_seed{}.csv", run.seed), &s.returns)?;
                w.score_steps(&format!("scores_{tag}_ln_bv_seed{}.csv", run.seed), &s.ln_bv)?;
            }
        }
        w.csv("posterior_summary.csv", &["seed", "spec", "param", "mean", "hpd95_lo", "hpd95_hi"], &post)?;
        w.csv(
            "scores.csv",
            &["seed", "spec", "r_ls", "r_qs", "r_crps", "lnbv_ls", "lnbv_qs", "lnbv_crps"],
            &scores,
        )?;
        w.json("empirical.json", &self.per_seed)
    }
}

fn load_data(cfg: &ExperimentConfig, e: &EmpiricalSettings, seed: u64) -> Result<MarketDataBundle> {
    let bundle = match &e.data {
        Some(path) => ingest_intraday_csv(path)?,
        None => {
            let theta = JumpDiffParams::from_slice(&cfg.theta0_or(&THETA0)?)?;
            let s = jumpdiff_simulate(&theta, e.length, e.intraday_per_day, &mut RngStream::new(seed, 0).rng())?;
            MarketDataBundle::from_simulation(&s)
        }
    };
    bundle.validate()?;
    Ok(bundle)
}

struct Posterior {
    draws: Vec<AbcDrawSet>,
}

/// ABC posteriors of every spec from one shared simulation budget, fitted on
/// the first `t` days.
fn abc_posteriors(
    cfg: &ExperimentConfig,
    specs: &[SummarySpec],
    data: &MarketDataBundle,
    t: usize,
    seed: u64,
    intraday: usize,
) -> Result<Posterior> {
    let (r, b, jv) = (&data.returns[..t], &data.ln_bv[..t], &data.jv[..t]);
    let aux = AuxData::paired(r, b);
    let fits = specs
        .iter()
        .map(|sp| fit_aux_qmle(sp.aux_model().expect("score spec"), &aux, derive_seed(seed, &[1])))
        .collect::<abf_core::Result<Vec<AuxFit>>>()?;
    let observed = SummaryInput::realized(r, b, jv);
    let etas = specs
        .iter()
        .zip(&fits)
        .map(|(sp, f)| build_summary(sp, &observed, Some(f)))
        .collect::<abf_core::Result<Vec<_>>>()?;
    let labels: Vec<String> = specs.iter().map(|s| s.label()).collect();
    let (n, keep) = cfg.abc.resolve(t)?;
    let prior = JumpDiffParams::prior();
    let tables = build_reference_tables(&prior, &labels, n, derive_seed(seed, &[2]), |th, rng: &mut StreamRng| {
        let sim = jumpdiff_simulate(&JumpDiffParams::from_slice(th)?, t, intraday, rng)?;
        let input = SummaryInput::realized(&sim.returns, &sim.ln_bv, &sim.jv);
        specs.iter().zip(&fits).map(|(sp, f)| build_summary(sp, &input, Some(f))).collect()
    })?;
    let scaling = cfg.abc.scaling_or(Scaling::StdDev);
    let draws = tables
        .iter()
        .zip(&etas)
        .map(|(tb, e)| select_k(tb, e, keep, scaling))
        .collect::<abf_core::Result<Vec<_>>>()?;
    Ok(Posterior { draws })
}

fn observe(model: &JumpDiffStateSpace, s: &abf_core::models::JumpState, rng: &mut StreamRng) -> (f64, f64) {
    model.params.sample_observation(s, rng)
}

fn bind<'a>(data: &'a MarketDataBundle, len: usize) -> impl Fn(&[f64]) -> abf_core::Result<JumpDiffStateSpace<'a>> + Sync {
    move |th| {
        Ok(JumpDiffStateSpace {
            params: JumpDiffParams::from_slice(th)?,
            returns: &data.returns[..len],
            ln_bv: &data.ln_bv[..len],
        })
    }
}

fn posterior_rows(spec: &str, draws: &AbcDrawSet) -> Result<Vec<PosteriorRow>> {
    JumpDiffParams::NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = draws.column(j);
            let (lo, hi) = hpd_interval(&col, HPD_LEVEL)?;
            Ok(PosteriorRow {
                spec: spec.to_string(),
                param: name.to_string(),
                mean: stats::mean(&col),
                hpd_lo: lo,
                hpd_hi: hi,
            })
        })
        .collect()
}

fn in_bounds(draws: &[ParamVector]) -> bool {
    let prior = JumpDiffParams::prior();
    draws.iter().all(|d| prior.contains(d.values()))
}

#[derive(Default)]
struct ScoreAccumulator {
    r: Vec<abf_core::evaluation::StepScore>,
    b: Vec<abf_core::evaluation::StepScore>,
    floored: usize,
    skipped: usize,
}

impl ScoreAccumulator {
    fn push(&mut self, pairs: StateSpaceDraws<(f64, f64)>, data: &MarketDataBundle, origin: usize, step_t: usize) -> Result<()> {
        self.skipped += pairs.skipped;
        let joint = JointPredictive::from_pairs(pairs.draws, Provenance::Abf, origin)?;
        let (sr, fr) = score_step(&joint.first, data.returns[origin], step_t);
        let (sb, fb) = score_step(&joint.second, data.ln_bv[origin], step_t);
        self.floored += fr as usize + fb as usize;
        self.r.push(sr);
        self.b.push(sb);
        Ok(())
    }

    fn finish(self, spec: String, start_t: usize) -> Result<SpecScores> {
        Ok(SpecScores {
            spec,
            returns: ScoreReport::from_steps(self.r, start_t, Provenance::Abf, self.floored)?,
            ln_bv: ScoreReport::from_steps(self.b, start_t, Provenance::Abf, self.floored)?,
            skipped: self.skipped,
        })
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<EmpiricalOutcome> {
    let e = cfg.empirical();
    ensure!(!e.aux_models.is_empty(), "empirical run needs at least one auxiliary model");
    let specs: Vec<SummarySpec> = e
        .aux_models
        .iter()
        .map(|&model| SummarySpec::AuxScorePlusSupplementary { model })
        .collect();
    let labels: Vec<String> = specs.iter().map(|s| s.label()).collect();
    let pm = &cfg.predictive;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let data = load_data(cfg, &e, seed)?;
        ensure!(
            data.len() > e.holdout && e.holdout > 0,
            "{} days cannot leave a hold-out of {}",
            data.len(),
            e.holdout
        );
        let t0 = data.len() - e.holdout;
        let n_windows = e.windows.unwrap_or(e.holdout).min(e.holdout);
        ensure!(n_windows > 0, "no windows to score");
        let first = abc_posteriors(cfg, &specs, &data, t0, seed, e.intraday_per_day)
            .with_context(|| format!("ABC on the first {t0} days"))?;
        let mut posterior = Vec::new();
        let mut draws_in_bounds = true;
        for (label, d) in labels.iter().zip(&first.draws) {
            posterior.extend(posterior_rows(label, d)?);
            draws_in_bounds &= in_bounds(&d.draws);
        }

        let mut acc: Vec<ScoreAccumulator> = labels.iter().map(|_| ScoreAccumulator::default()).collect();
        if e.freeze {
            let origins: Vec<usize> = (0..n_windows).map(|w| t0 + w).collect();
            let len = t0 + n_windows - 1;
            for (j, d) in first.draws.iter().enumerate() {
                let stream = RngStream::new(derive_seed(seed, &[3, j as u64]), 0);
                let per_origin =
                    state_space_one_step_origins(&d.draws, bind(&data, len), observe, pm.particles, pm.m, &origins, stream)?;
                for (w, pairs) in per_origin.into_iter().enumerate() {
                    acc[j].push(pairs, &data, t0 + w, t0 + w + 1)?;
                }
            }
        } else {
            for w in 0..n_windows {
                let t = t0 + w;
                let post = if w == 0 {
                    None
                } else {
                    Some(abc_posteriors(cfg, &specs, &data, t, derive_seed(seed, &[4, w as u64]), e.intraday_per_day)?)
                };
                let draws = post.as_ref().map_or(&first.draws, |p| &p.draws);
                for (j, d) in draws.iter().enumerate() {
                    draws_in_bounds &= in_bounds(&d.draws);
                    let stream = RngStream::new(derive_seed(seed, &[5, w as u64, j as u64]), 0);
                    let pairs = state_space_one_step(
                        &d.draws,
                        bind(&data, t),
                        observe,
                        StateMethod::ParticleFilter,
                        pm.particles,
                        pm.m,
                        stream,
                    )?;
                    acc[j].push(pairs, &data, t, t + 1)?;
                }
            }
        }
        let scores = acc
            .into_iter()
            .zip(&labels)
            .map(|(a, l)| a.finish(l.clone(), t0))
            .collect::<Result<Vec<_>>>()?;
        per_seed.push(EmpiricalRun {
            seed,
            estimation_len: t0,
            n_windows,
            dropped_days: data.dropped.len(),
            posterior,
            scores,
            draws_in_bounds,
        });
    }
    Ok(EmpiricalOutcome { per_seed })
}
