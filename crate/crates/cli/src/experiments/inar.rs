//! INAR(1) count forecasts: ABF against the exact grid predictive.

use abf_core::abc::{build_reference_table, select_k, Scaling};
use abf_core::evaluation::expanding_window_eval_multi;
use abf_core::exact::{exact_predictive_discrete, grid_posterior_refined, inar1_loglikelihood};
use abf_core::models::{inar1_conditional_pmf, inar1_simulate, Inar1Params};
use abf_core::predictive::abf_predictive_discrete;
use abf_core::rng::RngStream;
use abf_core::summaries::{build_summary, Centering, SummaryInput, SummarySpec};
use anyhow::Result;

use super::{derive_seed, ScoreTable, SeedScores};
use crate::config::ExperimentConfig;

pub const THETA0: [f64; 2] = [0.4, 2.0];
pub const SUMMARY: SummarySpec = SummarySpec::Autocov {
    max_lag: 3,
    centering: Centering::MeanAndCentered,
};
pub const ABF_LABEL: &str = "ABF";
pub const EXACT_LABEL: &str = "exact";

pub fn run(cfg: &ExperimentConfig) -> Result<ScoreTable> {
    let theta0 = Inar1Params::from_slice(&cfg.theta0_or(&THETA0)?)?;
    let win = cfg.window()?;
    let prior = Inar1Params::prior();
    let scaling = cfg.abc.scaling_or(Scaling::None);
    let (coarse, fine) = cfg.grid.resolve(2);
    let label = SUMMARY.label();
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let y = inar1_simulate(&theta0, win.start_t + win.k, &mut RngStream::new(seed, 0).rng());
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let reports = expanding_window_eval_multi(
            &yf,
            |w, hist| {
                let t = hist.len();
                let counts = &y[..t];
                let y_last = counts[t - 1];
                let (n, keep) = cfg.abc.resolve(t)?;
                let eta = build_summary(&SUMMARY, &SummaryInput::univariate(hist), None)?;
                let table = build_reference_table(&prior, &label, n, derive_seed(seed, &[w as u64]), |th, rng| {
                    let p = Inar1Params::from_slice(th)?;
                    let z: Vec<f64> = inar1_simulate(&p, t, rng).into_iter().map(|v| v as f64).collect();
                    build_summary(&SUMMARY, &SummaryInput::univariate(&z), None)
                })?;
                let draws = select_k(&table, &eta, keep, scaling)?;
                let support = y_last as usize + 10;
                let cond = |th: &[f64]| Ok(inar1_conditional_pmf(&Inar1Params::from_slice(th)?, y_last, support));
                let abf = abf_predictive_discrete(&draws, cond, t)?;
                let ll = |th: &[f64]| {
                    Inar1Params::from_slice(th)
                        .and_then(|p| inar1_loglikelihood(&p, counts))
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let post = grid_posterior_refined(ll, &prior, &coarse, &fine)?;
                let exact = exact_predictive_discrete(&post, cond, t)?;
                Ok(vec![abf, exact])
            },
            win.start_t,
            win.k,
        )?;
        let mut it = reports.into_iter();
        per_seed.push(SeedScores {
            seed,
            reports: vec![
                (ABF_LABEL.to_string(), it.next().expect("two reports")),
                (EXACT_LABEL.to_string(), it.next().expect("two reports")),
            ],
        });
    }
    Ok(ScoreTable::from_seeds(per_seed))
}
