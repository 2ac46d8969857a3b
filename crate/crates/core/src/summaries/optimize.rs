//! Derivative-free minimization used for the auxiliary QMLE.

use argmin::core::{CostFunction, Error, Executor, State};
use argmin::solver::neldermead::NelderMead;

/// Cost returned for infeasible points so the simplex retreats from them.
pub const INFEASIBLE: f64 = 1e300;

struct Objective<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, Error> {
        let c = (self.0)(p);
        Ok(if c.is_finite() { c } else { INFEASIBLE })
    }
}

/// Nelder–Mead from an axis-aligned simplex of edge `step` around `start`.
/// Returns the best point and its cost.
pub fn nelder_mead<F>(f: F, start: &[f64], step: f64, max_iters: u64, tol: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut simplex = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut v = start.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .expect("tolerance is nonnegative");
    let run = Executor::new(Objective(&f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run();
    match run {
        Ok(res) => {
            let state = res.state();
            let best = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
            let cost = state.get_best_cost();
            (best, cost)
        }
        Err(_) => (start.to_vec(), f(start)),
    }
}

/// Repeated Nelder–Mead, restarting from the incumbent until a restart gains
/// less than `gain_tol`.
pub fn nelder_mead_restarts<F>(f: F, start: &[f64], step: f64, max_iters: u64, gain_tol: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let (mut best, mut cost) = nelder_mead(&f, start, step, max_iters, 1e-14);
    for _ in 0..20 {
        let (x, c) = nelder_mead(&f, &best, step * 0.1, max_iters, 1e-14);
        let gain = cost - c;
        if c < cost {
            best = x;
            cost = c;
        }
        if !(gain > gain_tol) {
            break;
        }
    }
    (best, cost)
}
