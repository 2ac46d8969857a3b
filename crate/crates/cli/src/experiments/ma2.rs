//! MA(2) forecasts: ABF under autocovariance summaries of several lengths
//! against the exact predictive.
//!
//! The exact predictive is the grid-posterior mixture of the Gaussian
//! one-step laws; ABF predictives are KDEs of one-step draws, one simulation
//! budget shared by all summary lengths.

use abf_core::abc::{build_reference_tables, select_k, Scaling};
use abf_core::evaluation::expanding_window_eval_multi;
use abf_core::exact::{gaussian_components, grid_posterior_refined};
use abf_core::models::{ma2_loglikelihood, ma2_one_step, ma2_simulate, Ma2Params};
use abf_core::predictive::{abf_predictive_continuous, PredictiveDistribution, Provenance};
use abf_core::rng::RngStream;
use abf_core::stats::std_normal;
use abf_core::summaries::{autocov_summary, Centering};
use anyhow::{Context, Result};

use super::{derive_seed, ScoreTable, SeedScores};
use crate::config::ExperimentConfig;

pub const THETA0: [f64; 3] = [0.8, 0.6, 1.0];
pub const EXACT_LABEL: &str = "exact";

pub fn abf_label(lag: usize) -> String {
    format!("ABF l={lag}")
}

pub fn run(cfg: &ExperimentConfig) -> Result<ScoreTable> {
    let theta0 = Ma2Params::from_slice(&cfg.theta0_or(&THETA0)?)?;
    let win = cfg.window()?;
    let lags = cfg.ma2.as_ref().context("ma2_table2 needs an [ma2] section")?.lags.clone();
    let prior = Ma2Params::prior();
    let scaling = cfg.abc.scaling_or(Scaling::None);
    let (coarse, fine) = cfg.grid.resolve(3);
    let labels: Vec<String> = lags.iter().map(|&l| abf_label(l)).collect();
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let y = ma2_simulate(&theta0, win.start_t + win.k, &mut RngStream::new(seed, 0).rng());
        let reports = expanding_window_eval_multi(
            &y,
            |w, hist| {
                let t = hist.len();
                let (n, keep) = cfg.abc.resolve(t)?;
                let tables = build_reference_tables(&prior, &labels, n, derive_seed(seed, &[w as u64]), |th, rng| {
                    let z = ma2_simulate(&Ma2Params::from_slice(th)?, t, rng);
                    lags.iter().map(|&l| autocov_summary(&z, l, Centering::Uncentered)).collect()
                })?;
                let mut preds = Vec::with_capacity(lags.len() + 1);
                for (j, (table, &l)) in tables.iter().zip(&lags).enumerate() {
                    let eta = autocov_summary(hist, l, Centering::Uncentered)?;
                    let draws = select_k(table, &eta, keep, scaling)?;
                    let one_step = |th: &[f64], rng: &mut abf_core::rng::StreamRng| {
                        let (m, v) = ma2_one_step(&Ma2Params::from_slice(th)?, hist)?;
                        Ok(m + v.sqrt() * std_normal(rng))
                    };
                    let stream = RngStream::new(derive_seed(seed, &[w as u64, j as u64 + 1]), 0);
                    preds.push(abf_predictive_continuous(&draws, one_step, cfg.predictive.m, t, stream)?);
                }
                let ll = |th: &[f64]| {
                    Ma2Params::from_slice(th)
                        .and_then(|p| ma2_loglikelihood(&p, hist))
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let post = grid_posterior_refined(ll, &prior, &coarse, &fine)?;
                let mix = gaussian_components(&post, |th| ma2_one_step(&Ma2Params::from_slice(th)?, hist))?;
                preds.push(PredictiveDistribution::gaussian_mixture(&mix, Provenance::Exact, t)?);
                Ok(preds)
            },
            win.start_t,
            win.k,
        )?;
        let names = labels.iter().cloned().chain(std::iter::once(EXACT_LABEL.to_string()));
        per_seed.push(SeedScores {
            seed,
            reports: names.zip(reports).collect(),
        });
    }
    Ok(ScoreTable::from_seeds(per_seed))
}
