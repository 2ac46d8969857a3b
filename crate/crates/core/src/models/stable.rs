//! Chambers–Mallows–Stuck draws from the α-stable law S(α, β, 0, 1) in the
//! 1-parameterization, α ≠ 1.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

pub fn alpha_stable_draw<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let v = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
    let w: f64 = Exp1.sample(rng);
    cms(alpha, beta, v, w)
}

fn cms(alpha: f64, beta: f64, v: f64, w: f64) -> f64 {
    let t = beta * (FRAC_PI_2 * alpha).tan();
    let b = t.atan() / alpha;
    let s = (1.0 + t * t).powf(0.5 / alpha);
    let av = alpha * (v + b);
    s * av.sin() / v.cos().powf(1.0 / alpha) * ((v - av).cos() / w).powf((1.0 - alpha) / alpha)
}
