//! Closed-form full conditionals for the hyper-parameter layer.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Normal posterior `(mean, variance)` for the common mean of `values ~ N(m, var)`
/// under the prior `m ~ N(prior_mean, prior_var)`.
pub fn normal_mean_posterior(values: &[f64], var: f64, prior_mean: f64, prior_var: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let precision = 1.0 / prior_var + n / var;
    let mean = (prior_mean / prior_var + sum / var) / precision;
    (mean, 1.0 / precision)
}

/// Inverse-gamma posterior `(shape, scale)` for the common variance of
/// `values ~ N(center, v)` under the prior `v ~ Inv-Gamma(shape, scale)`.
pub fn inv_gamma_variance_posterior(values: &[f64], center: f64, shape: f64, scale: f64) -> (f64, f64) {
    let ss: f64 = values.iter().map(|v| (v - center) * (v - center)).sum();
    (shape + 0.5 * values.len() as f64, scale + 0.5 * ss)
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// Draws from `Inv-Gamma(shape, scale)` as the reciprocal of a `Gamma(shape, 1/scale)` draw.
pub fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("inverse-gamma parameters must be positive");
    1.0 / g.sample(rng)
}
