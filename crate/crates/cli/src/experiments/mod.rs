//! Experiment drivers. Each returns a typed outcome that can be inspected
//! directly or written out with [`Outcome::emit`].

pub mod empirical;
pub mod inar;
pub mod ma2;
pub mod merging;
pub mod sv;

use abf_core::evaluation::{ScoreAverages, ScoreReport};
use abf_core::predictive::Provenance;
use abf_core::rng::splitmix64;
use anyhow::Result;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{num, ArtifactWriter};

/// Seed for a reference table or sub-task, mixed from a base seed and tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, t| splitmix64(acc ^ splitmix64(t.wrapping_add(1))))
}

/// Score reports of one data seed, one per competing predictive.
#[derive(Debug, Clone, Serialize)]
pub struct SeedScores {
    pub seed: u64,
    pub reports: Vec<(String, ScoreReport)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreRow {
    pub label: String,
    pub provenance: Provenance,
    pub averages: ScoreAverages,
}

/// Expanding-window score tables across data seeds.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreTable {
    pub per_seed: Vec<SeedScores>,
    /// Per-seed averages averaged again over seeds.
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn from_seeds(per_seed: Vec<SeedScores>) -> Self {
        let n = per_seed.len() as f64;
        let rows = per_seed[0]
            .reports
            .iter()
            .enumerate()
            .map(|(j, (label, rep))| {
                let mean = |f: fn(&ScoreAverages) -> f64| per_seed.iter().map(|s| f(&s.reports[j].1.averages)).sum::<f64>() / n;
                ScoreRow {
                    label: label.clone(),
                    provenance: rep.provenance,
                    averages: ScoreAverages {
                        ls: mean(|a| a.ls),
                        qs: mean(|a| a.qs),
                        crps: mean(|a| a.crps),
                    },
                }
            })
            .collect();
        Self { per_seed, rows }
    }

    pub fn row(&self, label: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn emit(&self, w: &mut ArtifactWriter) -> Result<()> {
        for s in &self.per_seed {
            for (label, rep) in &s.reports {
                w.score_steps(&format!("scores_{}_seed{}.csv", file_label(label), s.seed), rep)?;
            }
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    r.provenance.label().to_string(),
                    num(r.averages.ls),
                    num(r.averages.qs),
                    num(r.averages.crps),
                ]
            })
            .collect();
        w.csv("score_summary.csv", &["predictive", "provenance", "ls", "qs", "crps"], &rows)?;
        w.json("score_summary.json", &self.rows)
    }
}

/// Lowercase label with every run of non-alphanumerics collapsed to `_`.
pub fn file_label(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Scores(ScoreTable),
    Merging(merging::MergingOutcome),
    Sv(sv::SvOutcome),
    Empirical(empirical::EmpiricalOutcome),
}

impl Outcome {
    pub fn emit(&self, w: &mut ArtifactWriter) -> Result<()> {
        match self {
            Outcome::Scores(t) => t.emit(w),
            Outcome::Merging(m) => m.emit(w),
            Outcome::Sv(s) => s.emit(w),
            Outcome::Empirical(e) => e.emit(w),
        }
    }
}

/// Runs the experiment named by the config without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    Ok(match cfg.kind {
        ExperimentKind::InarTable1 => Outcome::Scores(inar::run(cfg)?),
        ExperimentKind::Ma2Table2 => Outcome::Scores(ma2::run(cfg)?),
        ExperimentKind::MergingFig2 => Outcome::Merging(merging::run(cfg)?),
        ExperimentKind::SvSection4 => Outcome::Sv(sv::run(cfg)?),
        ExperimentKind::JumpdiffEmpirical => Outcome::Empirical(empirical::run(cfg)?),
    })
}
