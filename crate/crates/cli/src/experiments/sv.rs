//! Stochastic volatility: exact (PMMH) predictive against ABF predictives
//! with particle-filtered and forward-simulated terminal states.

use abf_core::abc::{build_reference_tables, select_k, AbcDrawSet, Scaling};
use abf_core::evaluation::merging_metrics;
use abf_core::filtering::{bootstrap_pf, pmmh_sample, PmmhConfig, StateMethod, SvStateSpace};
use abf_core::models::{sv_simulate, SvParams};
use abf_core::params::ParamVector;
use abf_core::predictive::{state_method_provenance, state_space_one_step, PredictiveDistribution, Provenance};
use abf_core::rng::{RngStream, StreamRng};
use abf_core::stats;
use abf_core::summaries::{build_summary, fit_aux_qmle, AuxData, SummaryInput, SummarySpec};
use anyhow::{Context, Result};
use serde::Serialize;

use super::{derive_seed, file_label};
use crate::config::ExperimentConfig;
use crate::output::{num, ArtifactWriter};

pub const THETA0: [f64; 2] = [0.9, 0.1];

#[derive(Debug, Clone, Serialize)]
pub struct SvSeedResult {
    pub seed: u64,
    /// TV between the exact and the particle-filtered ABF predictive of the
    /// first auxiliary model.
    pub tv_pf: f64,
    /// Same with forward-simulated terminal states.
    pub tv_fs: f64,
    /// `(spec, spec, tv)` between particle-filtered ABF predictives.
    pub pairwise: Vec<(String, String, f64)>,
    pub pmmh_acceptance: f64,
    pub exact_mean: Vec<f64>,
    pub abf_means: Vec<(String, Vec<f64>)>,
    #[serde(skip)]
    pub predictives: Vec<(String, PredictiveDistribution)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SvOutcome {
    pub per_seed: Vec<SvSeedResult>,
    pub mean_tv_pf: f64,
    pub mean_tv_fs: f64,
    pub mean_pairwise: Vec<(String, String, f64)>,
}

impl SvOutcome {
    pub fn emit(&self, w: &mut ArtifactWriter) -> Result<()> {
        let mut rows = Vec::new();
        for s in &self.per_seed {
            rows.push(vec![s.seed.to_string(), "exact".into(), "abf_pf".into(), num(s.tv_pf)]);
            rows.push(vec![s.seed.to_string(), "exact".into(), "abf_fs".into(), num(s.tv_fs)]);
            for (a, b, tv) in &s.pairwise {
                rows.push(vec![s.seed.to_string(), a.clone(), b.clone(), num(*tv)]);
            }
            for (label, p) in &s.predictives {
                let path = w.path(&format!("predictive_{}_seed{}.csv", file_label(label), s.seed));
                p.write_csv(&path, &[("seed", s.seed.to_string()), ("spec", label.clone())])?;
            }
        }
        w.csv("sv_tv.csv", &["seed", "first", "second", "tv"], &rows)?;
        w.json("sv_summary.json", self)
    }
}

fn column_sd(draws: &AbcDrawSet, j: usize) -> f64 {
    stats::std_dev(&draws.column(j)).max(1e-3)
}

fn sv_predictive(
    thetas: &[ParamVector],
    y: &[f64],
    method: StateMethod,
    particles: usize,
    m: usize,
    provenance: Provenance,
    stream: RngStream,
) -> Result<PredictiveDistribution> {
    let out = state_space_one_step(
        thetas,
        |th| Ok(SvStateSpace { params: SvParams::from_slice(th)?, y }),
        |model, s: &f64, rng| model.params.sample_return(*s, rng),
        method,
        particles,
        m,
        stream,
    )?;
    Ok(PredictiveDistribution::from_samples(out.draws, provenance, y.len())?)
}

pub fn run(cfg: &ExperimentConfig) -> Result<SvOutcome> {
    let s = cfg.sv.as_ref().context("sv_section4 needs an [sv] section")?;
    let theta0 = SvParams::from_slice(&cfg.theta0_or(&THETA0)?)?;
    let prior = SvParams::prior();
    let scaling = cfg.abc.scaling_or(Scaling::None);
    let specs: Vec<SummarySpec> = s.aux_models.iter().map(|&model| SummarySpec::AuxScore { model }).collect();
    let labels: Vec<String> = specs.iter().map(|sp| sp.label()).collect();
    let (n, keep) = cfg.abc.resolve(s.t)?;
    let pm = &cfg.predictive;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (y, _) = sv_simulate(&theta0, s.t, &mut RngStream::new(seed, 0).rng());
        let data = AuxData::returns(&y);
        let fits = s
            .aux_models
            .iter()
            .map(|&m| fit_aux_qmle(m, &data, derive_seed(seed, &[1])))
            .collect::<abf_core::Result<Vec<_>>>()?;
        let etas = specs
            .iter()
            .zip(&fits)
            .map(|(sp, f)| build_summary(sp, &SummaryInput::univariate(&y), Some(f)))
            .collect::<abf_core::Result<Vec<_>>>()?;
        let tables = build_reference_tables(&prior, &labels, n, derive_seed(seed, &[2]), |th, rng: &mut StreamRng| {
            let (z, _) = sv_simulate(&SvParams::from_slice(th)?, s.t, rng);
            specs
                .iter()
                .zip(&fits)
                .map(|(sp, f)| build_summary(sp, &SummaryInput::univariate(&z), Some(f)))
                .collect()
        })?;
        let draw_sets = tables
            .iter()
            .zip(&etas)
            .map(|(t, e)| select_k(t, e, keep, scaling))
            .collect::<abf_core::Result<Vec<_>>>()?;

        let mut predictives = Vec::new();
        for (j, (label, d)) in labels.iter().zip(&draw_sets).enumerate() {
            let stream = RngStream::new(derive_seed(seed, &[3, j as u64]), 0);
            let p = sv_predictive(&d.draws, &y, StateMethod::ParticleFilter, pm.particles, pm.m, Provenance::Abf, stream)?;
            predictives.push((format!("{label} PF"), p));
        }
        let fs_stream = RngStream::new(derive_seed(seed, &[4]), 0);
        let fs = sv_predictive(
            &draw_sets[0].draws,
            &y,
            StateMethod::ForwardSimulation,
            pm.particles,
            pm.m,
            state_method_provenance(StateMethod::ForwardSimulation),
            fs_stream,
        )?;

        let pcfg = PmmhConfig {
            n_iter: s.pmmh.n_iter,
            n_keep: s.pmmh.n_keep,
            pilot_iter: s.pmmh.pilot_iter,
            max_pilot_rounds: s.pmmh.max_pilot_rounds,
            initial_sd: (0..prior.dim()).map(|j| column_sd(&draw_sets[0], j)).collect(),
        };
        let pf_n = s.pmmh.particles;
        let loglik = |th: &[f64], rng: &mut StreamRng| {
            let model = SvStateSpace { params: SvParams::from_slice(th)?, y: &y };
            Ok(bootstrap_pf(&model, pf_n, rng)?.loglik)
        };
        let chain = pmmh_sample(loglik, &prior, &draw_sets[0].mean(), &pcfg, RngStream::new(derive_seed(seed, &[5]), 0))?;
        let exact_stream = RngStream::new(derive_seed(seed, &[6]), 0);
        let exact = sv_predictive(&chain.draws, &y, StateMethod::ParticleFilter, pm.particles, pm.m, Provenance::Exact, exact_stream)?;

        let tv_pf = merging_metrics(&exact, &predictives[0].1)?.tv;
        let tv_fs = merging_metrics(&exact, &fs)?.tv;
        let mut pairwise = Vec::new();
        for a in 0..predictives.len() {
            for b in a + 1..predictives.len() {
                let tv = merging_metrics(&predictives[a].1, &predictives[b].1)?.tv;
                pairwise.push((labels[a].clone(), labels[b].clone(), tv));
            }
        }
        let exact_mean: Vec<f64> = (0..prior.dim())
            .map(|j| stats::mean(&chain.draws.iter().map(|d| d.values()[j]).collect::<Vec<_>>()))
            .collect();
        predictives.push((format!("{} FS", labels[0]), fs));
        predictives.push(("exact".to_string(), exact));
        per_seed.push(SvSeedResult {
            seed,
            tv_pf,
            tv_fs,
            pairwise,
            pmmh_acceptance: chain.acceptance,
            exact_mean,
            abf_means: labels.iter().cloned().zip(draw_sets.iter().map(|d| d.mean())).collect(),
            predictives,
        });
    }
    let k = per_seed.len() as f64;
    let mean_tv_pf = per_seed.iter().map(|r| r.tv_pf).sum::<f64>() / k;
    let mean_tv_fs = per_seed.iter().map(|r| r.tv_fs).sum::<f64>() / k;
    let mean_pairwise = per_seed[0]
        .pairwise
        .iter()
        .enumerate()
        .map(|(i, (a, b, _))| (a.clone(), b.clone(), per_seed.iter().map(|r| r.pairwise[i].2).sum::<f64>() / k))
        .collect();
    Ok(SvOutcome {
        per_seed,
        mean_tv_pf,
        mean_tv_fs,
        mean_pairwise,
    })
}
