//! Reference tables and ABC draw selection.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AbfError, Result};
use crate::params::{scaled_distance, ParamVector, PriorBox};
use crate::persist::{self, Container};
use crate::rng::{RngStream, StreamRng};

/// Resimulation cap per row.
pub const MAX_ROW_RETRIES: usize = 100;

/// Componentwise scaling applied before the Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    None,
    /// Divide each summary coordinate by its standard deviation across the table.
    StdDev,
}

#[derive(Debug, Clone)]
pub struct ReferenceTable {
    thetas: Vec<f64>,
    etas: Vec<f64>,
    n: usize,
    theta_dim: usize,
    eta_dim: usize,
    names: Arc<[String]>,
    prior: PriorBox,
    seed_base: u64,
    resimulated: usize,
    spec_label: String,
}

impl ReferenceTable {
    /// Table from already simulated rows. Every theta must lie in the prior.
    pub fn from_rows(
        prior: &PriorBox,
        thetas: Vec<Vec<f64>>,
        etas: Vec<Vec<f64>>,
        seed_base: u64,
        spec_label: impl Into<String>,
    ) -> Result<Self> {
        if thetas.len() != etas.len() {
            return Err(AbfError::DimensionMismatch {
                expected: thetas.len(),
                found: etas.len(),
            });
        }
        let n = thetas.len();
        if n == 0 {
            return Err(AbfError::InvalidParameter("reference table needs at least one row".into()));
        }
        let eta_dim = etas[0].len();
        let mut flat_t = Vec::with_capacity(n * prior.dim());
        let mut flat_e = Vec::with_capacity(n * eta_dim);
        for (t, e) in thetas.iter().zip(&etas) {
            if !prior.contains(t) {
                return Err(AbfError::InvalidParameter(format!("theta {t:?} lies outside the prior")));
            }
            if e.len() != eta_dim {
                return Err(AbfError::DimensionMismatch {
                    expected: eta_dim,
                    found: e.len(),
                });
            }
            flat_t.extend_from_slice(t);
            flat_e.extend_from_slice(e);
        }
        Ok(Self {
            thetas: flat_t,
            etas: flat_e,
            n,
            theta_dim: prior.dim(),
            eta_dim,
            names: prior.shared_names(),
            prior: prior.clone(),
            seed_base,
            resimulated: 0,
            spec_label: spec_label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn eta_dim(&self) -> usize {
        self.eta_dim
    }

    pub fn seed_base(&self) -> u64 {
        self.seed_base
    }

    pub fn prior(&self) -> &PriorBox {
        &self.prior
    }

    pub fn spec_label(&self) -> &str {
        &self.spec_label
    }

    /// Rows that had to be resimulated at least once, summed over retries.
    pub fn resimulated(&self) -> usize {
        self.resimulated
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i * self.theta_dim..(i + 1) * self.theta_dim]
    }

    pub fn eta(&self, i: usize) -> &[f64] {
        &self.etas[i * self.eta_dim..(i + 1) * self.eta_dim]
    }

    pub fn param_vector(&self, i: usize) -> ParamVector {
        ParamVector::new(self.theta(i).to_vec(), Arc::clone(&self.names))
            .expect("table rows are finite and sized to the prior")
    }

    /// Sample standard deviation of each summary column; zero columns map to 1.
    pub fn eta_scales(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.eta_dim)
            .map(|j| {
                let m = (0..self.n).map(|i| self.etas[i * self.eta_dim + j]).sum::<f64>() / n;
                let ss: f64 = (0..self.n)
                    .map(|i| (self.etas[i * self.eta_dim + j] - m).powi(2))
                    .sum();
                let sd = if self.n > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
                if sd > 0.0 && sd.is_finite() { sd } else { 1.0 }
            })
            .collect()
    }

    pub fn distances(&self, eta_obs: &[f64], scaling: Scaling) -> Result<Vec<f64>> {
        if eta_obs.len() != self.eta_dim {
            return Err(AbfError::DimensionMismatch {
                expected: self.eta_dim,
                found: eta_obs.len(),
            });
        }
        let scales = match scaling {
            Scaling::None => None,
            Scaling::StdDev => Some(self.eta_scales()),
        };
        Ok((0..self.n)
            .map(|i| scaled_distance(self.eta(i), eta_obs, scales.as_deref()))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = vec![
            ("kind".to_string(), "reference_table".to_string()),
            ("seed".to_string(), self.seed_base.to_string()),
            ("spec".to_string(), self.spec_label.clone()),
            ("names".to_string(), self.names.join(",")),
            ("prior_lower".to_string(), persist::join_f64(self.prior.lower())),
            ("prior_upper".to_string(), persist::join_f64(self.prior.upper())),
            ("prior_truncated".to_string(), self.prior.is_truncated().to_string()),
            ("resimulated".to_string(), self.resimulated.to_string()),
        ];
        persist::write_container(
            path,
            &Container {
                rows: self.n,
                width_a: self.theta_dim,
                width_b: self.eta_dim,
                a: self.thetas.clone(),
                b: self.etas.clone(),
                meta,
            },
        )
    }

    /// Reads a saved table. A truncation constraint on the prior is not
    /// stored; pass the original prior to restore it.
    pub fn load(path: &Path, prior: Option<&PriorBox>) -> Result<Self> {
        let c = persist::read_container(path)?;
        if c.require("kind")? != "reference_table" {
            return Err(AbfError::Format(format!("{} does not hold a reference table", path.display())));
        }
        let names: Vec<String> = c.require("names")?.split(',').map(str::to_string).collect();
        let stored = PriorBox::new(
            names,
            persist::parse_f64_list(c.require("prior_lower")?)?,
            persist::parse_f64_list(c.require("prior_upper")?)?,
        )?;
        let prior = match prior {
            Some(p) if p.names() == stored.names() && p.lower() == stored.lower() && p.upper() == stored.upper() => p.clone(),
            Some(_) => return Err(AbfError::Format("stored prior bounds differ from the supplied prior".into())),
            None => stored,
        };
        if c.width_a != prior.dim() {
            return Err(AbfError::DimensionMismatch {
                expected: prior.dim(),
                found: c.width_a,
            });
        }
        let parse_usize = |k: &str| -> Result<u64> {
            c.require(k)?
                .parse::<u64>()
                .map_err(|e| AbfError::Format(format!("{k}: {e}")))
        };
        Ok(Self {
            n: c.rows,
            theta_dim: c.width_a,
            eta_dim: c.width_b,
            names: prior.shared_names(),
            seed_base: parse_usize("seed")?,
            resimulated: parse_usize("resimulated")? as usize,
            spec_label: c.require("spec")?.to_string(),
            prior,
            thetas: c.a,
            etas: c.b,
        })
    }
}

/// Builds several tables that share their theta draws: `simulate` maps one
/// theta to one summary vector per spec. Row `i` draws from stream
/// `(seed, i)`; a failed row redraws theta and retries on child streams.
pub fn build_reference_tables<F>(
    prior: &PriorBox,
    spec_labels: &[String],
    n: usize,
    seed: u64,
    simulate: F,
) -> Result<Vec<ReferenceTable>>
where
    F: Fn(&[f64], &mut StreamRng) -> Result<Vec<Vec<f64>>> + Sync,
{
    if n == 0 {
        return Err(AbfError::InvalidParameter("reference table size must be positive".into()));
    }
    let n_specs = spec_labels.len();
    let rows: Vec<(Vec<f64>, Vec<Vec<f64>>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| simulate_row(prior, n_specs, seed, i, &simulate))
        .collect::<Result<_>>()?;

    let mut dims = vec![None; n_specs];
    let mut tables = Vec::with_capacity(n_specs);
    for (s, label) in spec_labels.iter().enumerate() {
        let mut etas = Vec::new();
        for (i, (_, e, _)) in rows.iter().enumerate() {
            let d = *dims[s].get_or_insert(e[s].len());
            if e[s].len() != d {
                return Err(AbfError::TableConstruction {
                    row: i,
                    retries: 0,
                    reason: format!("summary dimension changed from {d} to {}", e[s].len()),
                });
            }
            etas.extend_from_slice(&e[s]);
        }
        tables.push(ReferenceTable {
            thetas: rows.iter().flat_map(|(t, _, _)| t.iter().copied()).collect(),
            etas,
            n,
            theta_dim: prior.dim(),
            eta_dim: dims[s].unwrap_or(0),
            names: prior.shared_names(),
            prior: prior.clone(),
            seed_base: seed,
            resimulated: rows.iter().map(|r| r.2).sum(),
            spec_label: label.clone(),
        });
    }
    Ok(tables)
}

fn simulate_row<F>(prior: &PriorBox, n_specs: usize, seed: u64, i: usize, simulate: &F) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)>
where
    F: Fn(&[f64], &mut StreamRng) -> Result<Vec<Vec<f64>>>,
{
    let base = RngStream::new(seed, i as u64);
    let mut reason = String::new();
    for attempt in 0..=MAX_ROW_RETRIES {
        let mut rng = if attempt == 0 { base.rng() } else { base.child(attempt as u64).rng() };
        let theta = prior.sample_values(&mut rng)?;
        match simulate(&theta, &mut rng) {
            Ok(etas) if etas.len() == n_specs && etas.iter().all(|e| e.iter().all(|x| x.is_finite())) => {
                return Ok((theta, etas, attempt));
            }
            Ok(etas) if etas.len() != n_specs => {
                return Err(AbfError::DimensionMismatch {
                    expected: n_specs,
                    found: etas.len(),
                });
            }
            Ok(_) => reason = "non-finite summary".into(),
            Err(e) => reason = e.to_string(),
        }
    }
    Err(AbfError::TableConstruction {
        row: i,
        retries: MAX_ROW_RETRIES,
        reason,
    })
}

pub fn build_reference_table<F>(
    prior: &PriorBox,
    spec_label: &str,
    n: usize,
    seed: u64,
    simulate: F,
) -> Result<ReferenceTable>
where
    F: Fn(&[f64], &mut StreamRng) -> Result<Vec<f64>> + Sync,
{
    let mut v = build_reference_tables(prior, &[spec_label.to_string()], n, seed, |t, rng| {
        simulate(t, rng).map(|e| vec![e])
    })?;
    Ok(v.remove(0))
}

/// Retained draws sorted by distance, ties by row index.
#[derive(Debug, Clone)]
pub struct AbcDrawSet {
    pub draws: Vec<ParamVector>,
    pub distances: Vec<f64>,
    pub indices: Vec<usize>,
    pub alpha_used: f64,
    pub epsilon_effective: f64,
}

impl AbcDrawSet {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let k = self.draws.first().map_or(0, |d| d.len());
        let mut m = vec![0.0; k];
        for d in &self.draws {
            for (a, v) in m.iter_mut().zip(d.values()) {
                *a += v;
            }
        }
        let n = self.draws.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }
}

fn draw_set(table: &ReferenceTable, mut order: Vec<(f64, usize)>, alpha_used: f64) -> AbcDrawSet {
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    AbcDrawSet {
        draws: order.iter().map(|&(_, i)| table.param_vector(i)).collect(),
        distances: order.iter().map(|p| p.0).collect(),
        indices: order.iter().map(|p| p.1).collect(),
        alpha_used,
        epsilon_effective: order.last().map_or(0.0, |p| p.0),
    }
}

pub fn accept_reject(table: &ReferenceTable, eta_obs: &[f64], epsilon: f64, scaling: Scaling) -> Result<AbcDrawSet> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(AbfError::InvalidParameter(format!("tolerance must be nonnegative, got {epsilon}")));
    }
    let d = table.distances(eta_obs, scaling)?;
    let kept: Vec<(f64, usize)> = d
        .into_iter()
        .enumerate()
        .filter(|(_, x)| *x <= epsilon)
        .map(|(i, x)| (x, i))
        .collect();
    if kept.is_empty() {
        return Err(AbfError::EmptyPosterior);
    }
    let alpha = kept.len() as f64 / table.len() as f64;
    Ok(draw_set(table, kept, alpha))
}

/// Number of nearest neighbours retained at quantile `alpha`.
pub fn retained_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// The `k` rows closest to `eta_obs`.
pub fn select_k(table: &ReferenceTable, eta_obs: &[f64], k: usize, scaling: Scaling) -> Result<AbcDrawSet> {
    if k == 0 || k > table.len() {
        return Err(AbfError::InvalidParameter(format!(
            "cannot retain {k} of {} rows",
            table.len()
        )));
    }
    let d = table.distances(eta_obs, scaling)?;
    let mut all: Vec<(f64, usize)> = d.into_iter().enumerate().map(|(i, x)| (x, i)).collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
    }
    Ok(draw_set(table, all, k as f64 / table.len() as f64))
}

pub fn nearest_neighbor_select(table: &ReferenceTable, eta_obs: &[f64], alpha: f64, scaling: Scaling) -> Result<AbcDrawSet> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AbfError::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let mut set = select_k(table, eta_obs, retained_count(alpha, table.len()), scaling)?;
    set.alpha_used = alpha;
    Ok(set)
}

/// Quantile and table size that keep the retained count fixed as `T` grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSchedule {
    pub alpha: f64,
    pub n: usize,
    pub retained: usize,
}

pub fn tolerance_schedule(t: usize) -> Result<ToleranceSchedule> {
    if t < 50 {
        return Err(AbfError::InsufficientData { needed: 50, got: t });
    }
    let tf = t as f64;
    let alpha = 50.0 * tf.powf(-1.5);
    let n = (500.0 / alpha).round() as usize;
    Ok(ToleranceSchedule {
        alpha,
        n,
        retained: (alpha * n as f64).round() as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_prior() -> PriorBox {
        PriorBox::new(vec!["a", "b"], vec![0.0, 0.0], vec![1.0, 10.0]).unwrap()
    }

    fn toy_sim(t: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![t[0] + 0.1 * rng.random::<f64>(), t[1]])
    }

    #[test]
    fn tables_are_deterministic_and_inside_prior() {
        let p = toy_prior();
        let a = build_reference_table(&p, "toy", 10, 5, toy_sim).unwrap();
        let b = build_reference_table(&p, "toy", 10, 5, toy_sim).unwrap();
        assert_eq!(a.thetas, b.thetas);
        assert_eq!(a.etas, b.etas);
        for i in 0..a.len() {
            assert!(p.contains(a.theta(i)));
        }
        let c = build_reference_table(&p, "toy", 10, 6, toy_sim).unwrap();
        assert_ne!(a.thetas, c.thetas);
    }

    #[test]
    fn worker_count_does_not_change_table() {
        let p = toy_prior();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| build_reference_table(&p, "toy", 200, 9, toy_sim).unwrap());
        let b = wide.install(|| build_reference_table(&p, "toy", 200, 9, toy_sim).unwrap());
        assert_eq!(a.etas, b.etas);
    }

    #[test]
    fn failing_rows_are_resimulated_with_fresh_theta() {
        let p = toy_prior();
        let t = build_reference_table(&p, "toy", 50, 1, |th, rng| {
            if th[0] < 0.5 {
                Err(AbfError::DegenerateRegression)
            } else {
                toy_sim(th, rng)
            }
        })
        .unwrap();
        assert!(t.resimulated() > 0);
        assert!((0..t.len()).all(|i| t.theta(i)[0] >= 0.5));
    }

    #[test]
    fn hopeless_rows_give_table_error() {
        let p = toy_prior();
        let r = build_reference_table(&p, "toy", 3, 1, |_, _| Err(AbfError::DegenerateRegression));
        assert!(matches!(r, Err(AbfError::TableConstruction { retries: 100, .. })));
    }

    fn table_from(etas: Vec<Vec<f64>>) -> ReferenceTable {
        let p = PriorBox::new(vec!["x"], vec![0.0], vec![1.0]).unwrap();
        let n = etas.len();
        let thetas = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        ReferenceTable::from_rows(&p, thetas, etas, 0, "fixed").unwrap()
    }

    #[test]
    fn accept_reject_limits() {
        let t = table_from((0..20).map(|i| vec![i as f64, 1.0]).collect());
        let all = accept_reject(&t, &[3.0, 1.0], f64::INFINITY, Scaling::None).unwrap();
        assert_eq!(all.len(), 20);
        let one = accept_reject(&t, &[7.0, 1.0], 0.0, Scaling::None).unwrap();
        assert_eq!(one.indices, vec![7]);
        assert!(matches!(
            accept_reject(&t, &[7.5, 1.0], 0.1, Scaling::None),
            Err(AbfError::EmptyPosterior)
        ));
    }

    #[test]
    fn accept_count_at_one_percent_quantile() {
        let p = toy_prior();
        let t = build_reference_table(&p, "toy", 5000, 2, toy_sim).unwrap();
        let eta = [0.5, 5.0];
        let mut d = t.distances(&eta, Scaling::None).unwrap();
        d.sort_by(f64::total_cmp);
        let eps = crate::stats::quantile_sorted(&d, 0.01);
        let set = accept_reject(&t, &eta, eps, Scaling::None).unwrap();
        assert!((set.len() as f64 - 50.0).abs() <= 1.0, "{}", set.len());
    }

    #[test]
    fn nearest_neighbor_counts() {
        let t = table_from((0..100).map(|i| vec![(i * 37 % 100) as f64]).collect());
        let s = nearest_neighbor_select(&t, &[50.0], 0.05, Scaling::None).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.distances.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(s.epsilon_effective, *s.distances.last().unwrap());
        assert_eq!(nearest_neighbor_select(&t, &[50.0], 1.0, Scaling::None).unwrap().len(), 100);
        assert_eq!(retained_count(0.01, 20_000), 200);
    }

    #[test]
    fn ties_broken_by_lowest_index() {
        let t = table_from(vec![vec![1.0], vec![-1.0], vec![1.0], vec![5.0]]);
        let s = select_k(&t, &[0.0], 2, Scaling::None).unwrap();
        assert_eq!(s.indices, vec![0, 1]);
    }

    #[test]
    fn studentized_distance_divides_by_column_sd() {
        let t = table_from(vec![vec![0.0, 0.0], vec![2.0, 200.0]]);
        let s = t.eta_scales();
        // sample sd of {0, 2} is sqrt(2), of {0, 200} is 100 sqrt(2)
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((s[1] - 100.0 * 2f64.sqrt()).abs() < 1e-9);
        let d = t.distances(&[0.0, 0.0], Scaling::StdDev).unwrap();
        assert!((d[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_values() {
        let s = tolerance_schedule(500).unwrap();
        assert!((s.alpha - 0.004472).abs() < 5e-7);
        assert_eq!(s.n, 111_803);
        let s = tolerance_schedule(100).unwrap();
        assert!((s.alpha - 0.05).abs() < 1e-15);
        assert_eq!(s.n, 10_000);
        for t in 50..3000 {
            assert_eq!(tolerance_schedule(t).unwrap().retained, 500);
        }
        assert!(tolerance_schedule(49).is_err());
    }

    #[test]
    fn table_round_trips_through_disk() {
        let p = toy_prior();
        let t = build_reference_table(&p, "toy", 25, 3, toy_sim).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.bin");
        t.save(&path).unwrap();
        let back = ReferenceTable::load(&path, None).unwrap();
        assert_eq!(back.thetas, t.thetas);
        assert_eq!(back.etas, t.etas);
        assert_eq!(back.seed_base(), 3);
        assert_eq!(back.spec_label(), "toy");
        assert_eq!(back.prior(), &p);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn accept_reject_is_monotone_in_epsilon(
            etas in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 5..60),
            obs in proptest::collection::vec(-5.0f64..5.0, 2),
            e1 in 0.0f64..6.0,
            e2 in 0.0f64..6.0,
        ) {
            let t = table_from(etas);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let small = accept_reject(&t, &obs, lo, Scaling::None);
            let large = accept_reject(&t, &obs, hi, Scaling::None);
            if let Ok(s) = small {
                let l = large.unwrap();
                prop_assert!(s.indices.iter().all(|i| l.indices.contains(i)));
            }
        }

        #[test]
        fn nearest_neighbor_reproduces_accept_reject(
            etas in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 5..60),
            obs in proptest::collection::vec(-5.0f64..5.0, 3),
            eps in 0.5f64..8.0,
        ) {
            let t = table_from(etas);
            if let Ok(ar) = accept_reject(&t, &obs, eps, Scaling::None) {
                let alpha = ar.len() as f64 / t.len() as f64;
                let nn = nearest_neighbor_select(&t, &obs, alpha, Scaling::None).unwrap();
                let mut a = ar.indices.clone();
                let mut b = nn.indices.clone();
                a.sort_unstable();
                b.sort_unstable();
                prop_assert_eq!(a, b);
            }
        }
    }
}
