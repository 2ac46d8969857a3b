//! MA(2) merging diagnostics across sample sizes.

use abf_core::evaluation::{merging_experiment, MergingConfig, MergingReport};
use anyhow::{Context, Result};
use serde::Serialize;

use super::ma2::THETA0;
use crate::config::ExperimentConfig;
use crate::output::{num, ArtifactWriter};

#[derive(Debug, Clone, Serialize)]
pub struct MergingOutcome {
    pub per_seed: Vec<(u64, Vec<MergingReport>)>,
}

impl MergingOutcome {
    pub fn emit(&self, w: &mut ArtifactWriter) -> Result<()> {
        let mut rows = Vec::new();
        let mut raw = Vec::new();
        for (seed, reports) in &self.per_seed {
            for r in reports {
                for row in &r.per_t {
                    let m = row.metrics;
                    rows.push(vec![
                        seed.to_string(),
                        r.spec_label.clone(),
                        row.t.to_string(),
                        row.replications.to_string(),
                        num(m.rmse),
                        num(m.rmse_cdf),
                        num(m.tv),
                        num(m.hellinger),
                        num(m.ovl),
                        num(m.ovl_unsquared),
                    ]);
                }
                for (rep, t, m) in &r.raw {
                    raw.push(vec![
                        seed.to_string(),
                        r.spec_label.clone(),
                        t.to_string(),
                        rep.to_string(),
                        num(m.rmse),
                        num(m.rmse_cdf),
                        num(m.tv),
                        num(m.hellinger),
                        num(m.ovl),
                        num(m.ovl_unsquared),
                    ]);
                }
            }
        }
        let metric_cols = ["rmse", "rmse_cdf", "tv", "hellinger", "ovl", "ovl_unsquared"];
        let mut header = vec!["seed", "spec", "t", "replications"];
        header.extend(metric_cols);
        w.csv("merging.csv", &header, &rows)?;
        let mut header = vec!["seed", "spec", "t", "replication"];
        header.extend(metric_cols);
        w.csv("merging_replications.csv", &header, &raw)?;
        w.json("merging.json", &self.per_seed)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<MergingOutcome> {
    let m = cfg.merging.as_ref().context("merging_fig2 needs a [merging] section")?;
    let theta0 = cfg.theta0_or(&THETA0)?;
    let (coarse, fine) = cfg.grid.resolve(3);
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let mc = MergingConfig {
            theta0: [theta0[0], theta0[1], theta0[2]],
            lags: m.lags.clone(),
            t_list: m.t_list.clone(),
            replications: m.replications,
            coarse_resolution: coarse[0],
            fine_resolution: fine[0],
            seed,
            failure_budget: m.failure_budget,
        };
        per_seed.push((seed, merging_experiment(&mc)?));
    }
    Ok(MergingOutcome { per_seed })
}
