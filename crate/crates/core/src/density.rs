//! Grid densities and Gaussian kernel density estimation.
//!
//! A [`GridDensity`] stores ordinates on a uniform grid and is treated as the
//! piecewise-linear interpolant of those ordinates: the CDF is exactly 0 at or
//! below the first grid point and exactly 1 at or above the last one.

use crate::error::{AbfError, Result};
use crate::stats;

/// Number of grid points used whenever a density has to be tabulated.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Kernel support, in bandwidths, covered by tabulated KDE grids.
pub const KDE_GRID_HALF_WIDTH: f64 = 4.0;

/// Kernel contributions beyond this many bandwidths are dropped (exp(-32)).
const KERNEL_CUTOFF: f64 = 8.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Vec<f64>,
    ordinates: Vec<f64>,
    cell_width: f64,
    /// cumulative mass at each grid node
    cumulative: Vec<f64>,
}

impl GridDensity {
    /// Builds a density from ordinates on a uniform grid and normalizes it.
    pub fn new(grid: Vec<f64>, ordinates: Vec<f64>) -> Result<Self> {
        let mut d = Self::unnormalized(grid, ordinates)?;
        let total = *d.cumulative.last().unwrap();
        if !(total > 0.0 && total.is_finite()) {
            return Err(AbfError::DegenerateInput(
                "grid density has zero or non-finite mass".into(),
            ));
        }
        for o in &mut d.ordinates {
            *o /= total;
        }
        for c in &mut d.cumulative {
            *c /= total;
        }
        Ok(d)
    }

    /// Builds a density without rescaling the ordinates.
    pub fn unnormalized(grid: Vec<f64>, ordinates: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(AbfError::InsufficientData {
                needed: 2,
                got: grid.len(),
            });
        }
        if ordinates.len() != grid.len() {
            return Err(AbfError::DimensionMismatch {
                expected: grid.len(),
                found: ordinates.len(),
            });
        }
        let n = grid.len();
        let cell_width = (grid[n - 1] - grid[0]) / (n - 1) as f64;
        if !(cell_width > 0.0 && cell_width.is_finite()) {
            return Err(AbfError::InvalidParameter("grid must be strictly increasing".into()));
        }
        for (i, g) in grid.iter().enumerate() {
            let expected = grid[0] + i as f64 * cell_width;
            if (g - expected).abs() > 1e-10 * cell_width.max(expected.abs()).max(1.0) {
                return Err(AbfError::InvalidParameter("grid is not uniform".into()));
            }
        }
        if ordinates.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
            return Err(AbfError::InvalidParameter(
                "ordinates must be finite and nonnegative".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(n);
        cumulative.push(0.0);
        for i in 1..n {
            let c = cumulative[i - 1] + 0.5 * cell_width * (ordinates[i - 1] + ordinates[i]);
            cumulative.push(c);
        }
        Ok(Self {
            grid,
            ordinates,
            cell_width,
            cumulative,
        })
    }

    /// Uniform grid of `n` points on `[lo, hi]`.
    pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let dx = (hi - lo) / (n - 1) as f64;
        (0..n).map(|i| lo + i as f64 * dx).collect()
    }

    /// Tabulates `f` on a uniform grid and normalizes.
    pub fn from_fn<F: Fn(f64) -> f64>(lo: f64, hi: f64, n: usize, f: F) -> Result<Self> {
        let grid = Self::uniform_grid(lo, hi, n);
        let ord = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, ord)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ordinates
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn lower(&self) -> f64 {
        self.grid[0]
    }

    pub fn upper(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Trapezoid integral of the ordinates.
    pub fn integral(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Linearly interpolated ordinate, zero outside the grid.
    pub fn ordinate_at(&self, x: f64) -> f64 {
        if !(x >= self.lower() && x <= self.upper()) {
            return 0.0;
        }
        let pos = (x - self.lower()) / self.cell_width;
        let i = (pos.floor() as usize).min(self.grid.len() - 2);
        let frac = pos - i as f64;
        self.ordinates[i] * (1.0 - frac) + self.ordinates[i + 1] * frac
    }

    /// Integral of the interpolated density up to `x`, clamped to `[0, 1]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() || x <= self.lower() {
            return 0.0;
        }
        if x >= self.upper() {
            return self.integral().min(1.0);
        }
        let pos = (x - self.lower()) / self.cell_width;
        let i = (pos.floor() as usize).min(self.grid.len() - 2);
        let s = x - self.grid[i];
        let a = self.ordinates[i];
        let b = self.ordinates[i + 1];
        let c = self.cumulative[i] + a * s + (b - a) * s * s / (2.0 * self.cell_width);
        c.clamp(0.0, 1.0)
    }

    /// Exact integral of the squared piecewise-linear density.
    pub fn integral_of_square(&self) -> f64 {
        self.ordinates
            .windows(2)
            .map(|w| (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 3.0)
            .sum::<f64>()
            * self.cell_width
    }

    /// Mean of the interpolated density.
    pub fn mean(&self) -> f64 {
        // exact for the linear interpolant on each cell
        let h = self.cell_width;
        self.ordinates
            .windows(2)
            .zip(&self.grid)
            .map(|(w, x0)| h * (w[0] * (x0 / 2.0 + h / 6.0) + w[1] * (x0 / 2.0 + h / 3.0)))
            .sum::<f64>()
            / self.integral()
    }
}

/// Cumulative integral of `density` up to `x`.
pub fn empirical_cdf(density: &GridDensity, x: f64) -> f64 {
    density.cdf(x)
}

/// Silverman's rule-of-thumb bandwidth `0.9 min(sd, IQR/1.34) n^{-1/5}`.
/// Falls back to the standard deviation when the IQR collapses.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(AbfError::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    let sorted = stats::sorted_copy(samples);
    silverman_sorted(&sorted)
}

fn silverman_sorted(sorted: &[f64]) -> Result<f64> {
    if sorted.iter().any(|x| !x.is_finite()) {
        return Err(AbfError::DegenerateSample("non-finite sample value".into()));
    }
    let sd = stats::std_dev(sorted);
    if !(sd > 0.0) {
        return Err(AbfError::DegenerateSample("all samples are identical".into()));
    }
    let iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (sorted.len() as f64).powf(-0.2))
}

/// One-dimensional Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    /// KDE with Silverman bandwidth; needs at least two distinct samples.
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(AbfError::InsufficientData {
                needed: 2,
                got: samples.len(),
            });
        }
        samples.sort_by(f64::total_cmp);
        let bandwidth = silverman_sorted(&samples)?;
        Ok(Self { samples, bandwidth })
    }

    pub fn with_bandwidth(mut samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(AbfError::InsufficientData { needed: 1, got: 0 });
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(AbfError::InvalidParameter(format!("bandwidth {bandwidth}")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `[min - 4h, max + 4h]`
    pub fn support(&self) -> (f64, f64) {
        let w = KDE_GRID_HALF_WIDTH * self.bandwidth;
        (self.samples[0] - w, self.samples[self.samples.len() - 1] + w)
    }

    pub fn ordinate(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.samples.partition_point(|s| *s < x - KERNEL_CUTOFF * h);
        let hi = self.samples.partition_point(|s| *s <= x + KERNEL_CUTOFF * h);
        let sum: f64 = self.samples[lo..hi]
            .iter()
            .map(|s| {
                let z = (x - s) / h;
                (-0.5 * z * z).exp()
            })
            .sum();
        sum * INV_SQRT_2PI / (h * self.samples.len() as f64)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let below = self.samples.partition_point(|s| *s < x - KERNEL_CUTOFF * h);
        let hi = self.samples.partition_point(|s| *s <= x + KERNEL_CUTOFF * h);
        let partial: f64 = self.samples[below..hi]
            .iter()
            .map(|s| stats::normal_cdf(x, *s, h))
            .sum();
        (below as f64 + partial) / self.samples.len() as f64
    }

    /// Ordinates at sorted `points`, using a sliding sample window.
    pub fn evaluate_sorted(&self, points: &[f64]) -> Vec<f64> {
        let h = self.bandwidth;
        let norm = INV_SQRT_2PI / (h * self.samples.len() as f64);
        let mut lo = 0;
        let mut hi = 0;
        let n = self.samples.len();
        points
            .iter()
            .map(|&x| {
                while lo < n && self.samples[lo] < x - KERNEL_CUTOFF * h {
                    lo += 1;
                }
                if hi < lo {
                    hi = lo;
                }
                while hi < n && self.samples[hi] <= x + KERNEL_CUTOFF * h {
                    hi += 1;
                }
                self.samples[lo..hi]
                    .iter()
                    .map(|s| {
                        let z = (x - s) / h;
                        (-0.5 * z * z).exp()
                    })
                    .sum::<f64>()
                    * norm
            })
            .collect()
    }

    /// Tabulates the estimate on `n` points spanning [`Kde::support`], normalized.
    pub fn to_grid(&self, n: usize) -> Result<GridDensity> {
        let (lo, hi) = self.support();
        self.to_grid_on(lo, hi, n)
    }

    pub fn to_grid_on(&self, lo: f64, hi: f64, n: usize) -> Result<GridDensity> {
        let grid = GridDensity::uniform_grid(lo, hi, n);
        let ord = self.evaluate_sorted(&grid);
        GridDensity::new(grid, ord)
    }
}

/// Gaussian-kernel density with Silverman bandwidth, evaluated on the uniform
/// grid `eval_points` and scaled so the estimate integrates to one over the
/// default grid spanning the samples ± 4 bandwidths.
pub fn kde_density(samples: &[f64], eval_points: &[f64]) -> Result<GridDensity> {
    let kde = Kde::new(samples.to_vec())?;
    let (lo, hi) = kde.support();
    let reference = GridDensity::uniform_grid(lo, hi, DEFAULT_GRID_POINTS);
    let norm = GridDensity::unnormalized(reference.clone(), kde.evaluate_sorted(&reference))?.integral();
    let mut pts = eval_points.to_vec();
    pts.sort_by(f64::total_cmp);
    let ord = kde.evaluate_sorted(&pts).into_iter().map(|o| o / norm).collect();
    GridDensity::unnormalized(pts, ord)
}

/// Product-Gaussian-kernel bivariate density with per-coordinate Silverman
/// bandwidths. Its marginals are exactly the one-dimensional KDEs.
#[derive(Debug, Clone)]
pub struct BivariateKde {
    points: Vec<(f64, f64)>,
    bandwidths: (f64, f64),
}

impl BivariateKde {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let hx = silverman_bandwidth(&xs)?;
        let hy = silverman_bandwidth(&ys)?;
        Ok(Self {
            points,
            bandwidths: (hx, hy),
        })
    }

    pub fn bandwidths(&self) -> (f64, f64) {
        self.bandwidths
    }

    pub fn ordinate(&self, x: f64, y: f64) -> f64 {
        let (hx, hy) = self.bandwidths;
        let s: f64 = self
            .points
            .iter()
            .map(|(a, b)| {
                let zx = (x - a) / hx;
                let zy = (y - b) / hy;
                (-0.5 * (zx * zx + zy * zy)).exp()
            })
            .sum();
        s * INV_SQRT_2PI * INV_SQRT_2PI / (hx * hy * self.points.len() as f64)
    }

    pub fn marginal(&self, coordinate: usize) -> Result<Kde> {
        let (vals, h): (Vec<f64>, f64) = match coordinate {
            0 => (self.points.iter().map(|p| p.0).collect(), self.bandwidths.0),
            1 => (self.points.iter().map(|p| p.1).collect(), self.bandwidths.1),
            _ => {
                return Err(AbfError::DimensionMismatch {
                    expected: 2,
                    found: coordinate + 1,
                })
            }
        };
        Kde::with_bandwidth(vals, h)
    }
}
