//! Parameter vectors, uniform prior boxes and the Euclidean distance used for
//! ABC matching.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AbfError, Result};

/// Named parameter vector. Names are shared between all vectors drawn from the
/// same prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    names: Arc<[String]>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, names: Arc<[String]>) -> Result<Self> {
        if values.len() != names.len() {
            return Err(AbfError::DimensionMismatch {
                expected: names.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AbfError::InvalidParameter(format!(
                "{} = {} is not finite",
                names[i], values[i]
            )));
        }
        Ok(Self { values, names })
    }

    /// Parameter vector with names `p0, p1, ...`.
    pub fn unnamed(values: Vec<f64>) -> Result<Self> {
        let names: Arc<[String]> = (0..values.len()).map(|i| format!("p{i}")).collect();
        Self::new(values, names)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn shared_names(&self) -> Arc<[String]> {
        Arc::clone(&self.names)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Independent uniform priors, one interval per parameter, optionally
/// truncated to the region where `constraint` holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorBox {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(skip)]
    shared: Option<Arc<[String]>>,
    #[serde(skip)]
    constraint: Option<fn(&[f64]) -> bool>,
}

impl PartialEq for PriorBox {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.lower == other.lower
            && self.upper == other.upper
            && self.constraint.is_some() == other.constraint.is_some()
    }
}

impl PriorBox {
    pub fn new<S: Into<String>>(names: Vec<S>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if lower.len() != names.len() || upper.len() != names.len() {
            return Err(AbfError::DimensionMismatch {
                expected: names.len(),
                found: lower.len().max(upper.len()),
            });
        }
        for i in 0..names.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(AbfError::InvalidParameter(format!(
                    "prior bounds for {} must satisfy lower < upper, got [{}, {}]",
                    names[i], lower[i], upper[i]
                )));
            }
        }
        let shared = Some(names.iter().cloned().collect());
        Ok(Self {
            names,
            lower,
            upper,
            shared,
            constraint: None,
        })
    }

    /// Truncates the box to `{θ : constraint(θ)}`.
    pub fn with_constraint(mut self, constraint: fn(&[f64]) -> bool) -> Self {
        self.constraint = Some(constraint);
        self
    }

    pub fn is_truncated(&self) -> bool {
        self.constraint.is_some()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn shared_names(&self) -> Arc<[String]> {
        match &self.shared {
            Some(s) => Arc::clone(s),
            None => self.names.iter().cloned().collect(),
        }
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dim()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            && self.constraint.is_none_or(|c| c(values))
    }

    /// Log prior density (uniform, unnormalized for truncation) or `-inf`
    /// outside the support.
    pub fn log_density(&self, values: &[f64]) -> f64 {
        if self.contains(values) {
            -self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(lo, hi)| (hi - lo).ln())
                .sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sample_box<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    /// One prior draw; truncated priors are sampled by rejection.
    pub fn sample_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self.constraint {
            None => Ok(self.sample_box(rng)),
            Some(c) => self.sample_truncated(rng, c).map(|p| p.values),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamVector> {
        Ok(ParamVector {
            values: self.sample_values(rng)?,
            names: self.shared_names(),
        })
    }

    /// Draws from the box truncated to `{θ : accept(θ)}` by rejection.
    pub fn sample_truncated<R, F>(&self, rng: &mut R, accept: F) -> Result<ParamVector>
    where
        R: Rng + ?Sized,
        F: Fn(&[f64]) -> bool,
    {
        for _ in 0..10_000 {
            let v = self.sample_box(rng);
            if accept(&v) {
                return Ok(ParamVector {
                    values: v,
                    names: self.shared_names(),
                });
            }
        }
        Err(AbfError::InvalidParameter(
            "prior truncation region has negligible mass".into(),
        ))
    }

    pub fn vector(&self, values: Vec<f64>) -> Result<ParamVector> {
        ParamVector::new(values, self.shared_names())
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(AbfError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Euclidean distance after dividing each coordinate by `scale[i]`.
pub(crate) fn scaled_distance(a: &[f64], b: &[f64], scale: Option<&[f64]>) -> f64 {
    match scale {
        None => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Some(s) => a
            .iter()
            .zip(b)
            .zip(s)
            .map(|((x, y), s)| {
                let d = (x - y) / s;
                d * d
            })
            .sum::<f64>()
            .sqrt(),
    }
}
