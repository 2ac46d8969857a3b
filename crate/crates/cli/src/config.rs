//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use abf_core::abc::{retained_count, tolerance_schedule, Scaling};
use abf_core::exact::min_resolution;
use abf_core::filtering::{DEFAULT_PMMH_PARTICLES, DEFAULT_PREDICTIVE_PARTICLES};
use abf_core::summaries::AuxModel;
use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "ABF_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    InarTable1,
    Ma2Table2,
    MergingFig2,
    SvSection4,
    JumpdiffEmpirical,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::InarTable1 => "inar_table1",
            ExperimentKind::Ma2Table2 => "ma2_table2",
            ExperimentKind::MergingFig2 => "merging_fig2",
            ExperimentKind::SvSection4 => "sv_section4",
            ExperimentKind::JumpdiffEmpirical => "jumpdiff_empirical",
        }
    }
}

/// Reference-table size and retained share: fixed, or tied to the sample
/// size through the tolerance schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AbcSettings {
    Fixed {
        n: usize,
        alpha: f64,
        #[serde(default)]
        scaling: Option<Scaling>,
    },
    Schedule {
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        scaling: Option<Scaling>,
    },
}

impl Default for AbcSettings {
    fn default() -> Self {
        AbcSettings::Schedule {
            n: None,
            alpha: None,
            scaling: None,
        }
    }
}

impl AbcSettings {
    /// `(N, retained)` for a sample of size `t`.
    pub fn resolve(&self, t: usize) -> abf_core::Result<(usize, usize)> {
        match self {
            AbcSettings::Fixed { n, alpha, .. } => Ok((*n, retained_count(*alpha, *n))),
            AbcSettings::Schedule { .. } => {
                let s = tolerance_schedule(t)?;
                Ok((s.n, s.retained))
            }
        }
    }

    pub fn scaling_or(&self, default: Scaling) -> Scaling {
        match self {
            AbcSettings::Fixed { scaling, .. } | AbcSettings::Schedule { scaling, .. } => scaling.unwrap_or(default),
        }
    }

    fn validate(&self, sample_sizes: &[usize]) -> Result<()> {
        match self {
            AbcSettings::Fixed { n, alpha, .. } => {
                ensure!(*n > 0, "abc.n must be positive");
                ensure!(*alpha > 0.0 && *alpha <= 1.0, "abc.alpha must lie in (0, 1]");
            }
            AbcSettings::Schedule { n, alpha, .. } => {
                for &t in sample_sizes {
                    let s = tolerance_schedule(t)?;
                    if let Some(n) = n {
                        ensure!(*n == s.n, "abc.n = {n} contradicts the tolerance schedule at T = {t} (N = {})", s.n);
                    }
                    if let Some(a) = alpha {
                        ensure!(
                            (a - s.alpha).abs() <= 1e-12 * s.alpha,
                            "abc.alpha = {a} contradicts the tolerance schedule at T = {t} (alpha = {})",
                            s.alpha
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub start_t: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveSettings {
    /// One-step draws per parameter draw.
    pub m: usize,
    pub particles: usize,
}

impl Default for PredictiveSettings {
    fn default() -> Self {
        Self {
            m: 1,
            particles: DEFAULT_PREDICTIVE_PARTICLES,
        }
    }
}

/// Exact-posterior grid, points per dimension. Unset values fall back to the
/// minimum resolution for the parameter dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub coarse: Option<usize>,
    pub fine: Option<usize>,
}

impl GridSettings {
    pub fn resolve(&self, dim: usize) -> (Vec<usize>, Vec<usize>) {
        let c = self.coarse.unwrap_or(min_resolution(dim));
        let f = self.fine.unwrap_or(min_resolution(dim));
        (vec![c; dim], vec![f; dim])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ma2Settings {
    /// Largest autocovariance lag of each ABF summary.
    pub lags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergingSettings {
    pub t_list: Vec<usize>,
    pub replications: usize,
    pub lags: Vec<usize>,
    #[serde(default = "default_failure_budget")]
    pub failure_budget: f64,
}

fn default_failure_budget() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmmhSettings {
    pub n_iter: usize,
    pub n_keep: usize,
    pub pilot_iter: usize,
    pub max_pilot_rounds: usize,
    pub particles: usize,
}

impl Default for PmmhSettings {
    fn default() -> Self {
        Self {
            n_iter: 4000,
            n_keep: 500,
            pilot_iter: 200,
            max_pilot_rounds: 10,
            particles: DEFAULT_PMMH_PARTICLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvSettings {
    pub t: usize,
    /// The first model also drives the forward-simulation comparison.
    pub aux_models: Vec<AuxModel>,
    #[serde(default)]
    pub pmmh: PmmhSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmpiricalSettings {
    /// Daily `(date, return, bv)` or intraday `(date, time, price)` CSV;
    /// synthetic data from `theta0` when absent.
    pub data: Option<PathBuf>,
    pub length: usize,
    pub holdout: usize,
    /// Scored windows, at most `holdout`; all of them when absent.
    pub windows: Option<usize>,
    /// Keep the posterior from the first window for all later ones.
    pub freeze: bool,
    pub intraday_per_day: usize,
    pub aux_models: Vec<AuxModel>,
}

impl Default for EmpiricalSettings {
    fn default() -> Self {
        Self {
            data: None,
            length: 1750,
            holdout: 250,
            windows: None,
            freeze: false,
            intraday_per_day: 78,
            aux_models: vec![AuxModel::GarchN, AuxModel::GarchT, AuxModel::TarchT, AuxModel::Rgarch],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Data-generating parameters, in the model's parameter order.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub abc: AbcSettings,
    #[serde(default)]
    pub window: Option<WindowSpec>,
    #[serde(default)]
    pub predictive: PredictiveSettings,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub ma2: Option<Ma2Settings>,
    #[serde(default)]
    pub merging: Option<MergingSettings>,
    #[serde(default)]
    pub sv: Option<SvSettings>,
    #[serde(default)]
    pub empirical: Option<EmpiricalSettings>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        // relative paths are taken relative to the config file
        if let Some(base) = path.parent() {
            if cfg.output_dir.is_relative() {
                cfg.output_dir = base.join(&cfg.output_dir);
            }
            if let Some(e) = cfg.empirical.as_mut() {
                if let Some(d) = e.data.as_mut() {
                    if d.is_relative() {
                        *d = base.join(&*d);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical serialization, hex encoded. The output
    /// directory and worker count do not enter, since results do not depend
    /// on them.
    pub fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = None;
        let digest = Sha256::digest(c.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Worker count: the environment override, then the config, then rayon's default.
    pub fn worker_count(&self) -> Result<Option<usize>> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let n: usize = v.trim().parse().with_context(|| format!("{WORKERS_ENV}={v} is not a count"))?;
                ensure!(n > 0, "{WORKERS_ENV} must be positive");
                Ok(Some(n))
            }
            Err(_) => Ok(self.workers),
        }
    }

    pub fn window(&self) -> Result<WindowSpec> {
        self.window
            .with_context(|| format!("{} needs a [window] section", self.kind.label()))
    }

    pub fn empirical(&self) -> EmpiricalSettings {
        self.empirical.clone().unwrap_or_default()
    }

    pub fn theta0_or(&self, default: &[f64]) -> Result<Vec<f64>> {
        let t = self.theta0.clone().unwrap_or_else(|| default.to_vec());
        ensure!(
            t.len() == default.len(),
            "theta0 has {} values but the model takes {}",
            t.len(),
            default.len()
        );
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.seeds.is_empty(), "at least one seed is required");
        if let Some(w) = self.workers {
            ensure!(w > 0, "workers must be positive");
        }
        ensure!(self.predictive.m > 0, "predictive.m must be positive");
        let sizes: Vec<usize> = match self.kind {
            ExperimentKind::InarTable1 | ExperimentKind::Ma2Table2 => {
                let w = self.window()?;
                ensure!(w.start_t > 0 && w.k > 0, "window.start_t and window.k must be positive");
                if self.kind == ExperimentKind::Ma2Table2 {
                    let m = self.ma2.as_ref().context("ma2_table2 needs an [ma2] section")?;
                    ensure!(!m.lags.is_empty(), "ma2.lags is empty");
                }
                (w.start_t..w.start_t + w.k).collect()
            }
            ExperimentKind::MergingFig2 => {
                let m = self.merging.as_ref().context("merging_fig2 needs a [merging] section")?;
                ensure!(!m.t_list.is_empty() && !m.lags.is_empty(), "merging.t_list and merging.lags must be nonempty");
                ensure!(m.replications > 0, "merging.replications must be positive");
                ensure!(
                    matches!(self.abc, AbcSettings::Schedule { .. }),
                    "merging_fig2 couples N and alpha to T; use abc.mode = \"schedule\""
                );
                m.t_list.clone()
            }
            ExperimentKind::SvSection4 => {
                let s = self.sv.as_ref().context("sv_section4 needs an [sv] section")?;
                ensure!(!s.aux_models.is_empty(), "sv.aux_models is empty");
                vec![s.t]
            }
            ExperimentKind::JumpdiffEmpirical => {
                let e = self.empirical();
                ensure!(e.holdout > 0 && e.holdout < e.length, "empirical.holdout must lie in (0, length)");
                if let Some(w) = e.windows {
                    ensure!(w > 0 && w <= e.holdout, "empirical.windows must lie in [1, holdout]");
                }
                if let Some(d) = &e.data {
                    if !d.exists() {
                        bail!("data file {} does not exist", d.display());
                    }
                }
                ensure!(!e.aux_models.is_empty(), "empirical.aux_models is empty");
                let first = e.length - e.holdout;
                let k = e.windows.unwrap_or(e.holdout);
                if e.freeze { vec![first] } else { (first..first + k).collect() }
            }
        };
        self.abc.validate(&sizes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INAR: &str = r#"
kind = "inar_table1"
output_dir = "out"
seeds = [1, 2]
theta0 = [0.4, 2.0]

[abc]
mode = "fixed"
n = 20000
alpha = 0.01

[window]
start_t = 100
k = 100
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml(INAR).unwrap();
        assert_eq!(c.kind, ExperimentKind::InarTable1);
        assert_eq!(c.abc.resolve(100).unwrap(), (20000, 200));
        c.validate().unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.fingerprint().unwrap(), again.fingerprint().unwrap());
        assert_eq!(c.fingerprint().unwrap().len(), 64);
    }

    #[test]
    fn fingerprint_ignores_runtime_fields() {
        let a = ExperimentConfig::from_toml(INAR).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        b.workers = Some(3);
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        b.seeds.push(9);
        assert_ne!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml(&format!("{INAR}\nbogus = 1\n")).is_err());
    }

    #[test]
    fn schedule_mode_rejects_contradicting_settings() {
        let text = INAR.replace("mode = \"fixed\"\nn = 20000\nalpha = 0.01", "mode = \"schedule\"\nn = 20000");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert!(c.validate().is_err());
        let ok = INAR.replace("mode = \"fixed\"\nn = 20000\nalpha = 0.01", "mode = \"schedule\"");
        let c = ExperimentConfig::from_toml(&ok).unwrap();
        c.validate().unwrap();
        assert_eq!(c.abc.resolve(500).unwrap(), (111_803, 500));
    }

    #[test]
    fn missing_data_file_fails_validation() {
        let text = r#"
kind = "jumpdiff_empirical"
output_dir = "out"
seeds = [1]
[empirical]
data = "/definitely/not/here.csv"
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert!(c.validate().is_err());
    }
}
