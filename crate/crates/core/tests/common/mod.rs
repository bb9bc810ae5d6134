//! Independent numerical references shared by the oracle and acceptance tests.
#![allow(dead_code)]

use mats_core::{logit, Counts, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub fn log_binom(y: u32, n: u32, theta: f64) -> f64 {
    // log p^y (1-p)^(n-y) on the logit scale
    let log_p = -(-theta).exp().ln_1p();
    let log_q = -theta.exp().ln_1p();
    y as f64 * log_p + (n - y) as f64 * log_q
}

pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), eps, 50)
}

/// `P(eta ≥ tau | y/n)` with `eta ~ N(0, s2)` and `theta = logit(p0) + eta`.
pub fn tail_1d(y: u32, n: u32, p0: f64, s2: f64, tau: f64) -> f64 {
    let th0 = logit(p0).unwrap();
    // shift by the log-likelihood at the mode region to keep values O(1)
    let shift = log_binom(y, n, logit((y as f64 + 0.5) / (n as f64 + 1.0)).unwrap());
    let dens = |e: f64| (log_binom(y, n, th0 + e) - shift - e * e / (2.0 * s2)).exp();
    let total = simpson(&dens, -10.0, 10.0, 1e-12);
    let upper = simpson(&dens, tau, 10.0, 1e-12);
    upper / total
}

pub struct Grid2 {
    pub go_high: f64,
    pub go_low: f64,
    pub superior: f64,
}

/// Tensor-grid posterior over `(eta, ln gamma)` for one indication with
/// pooled high-dose and low-dose counts.
pub fn grid_2d(high: Counts, low: Counts, p0: f64, tau1: f64, tau2: f64, s2_eta: f64, s2_gamma: f64) -> Grid2 {
    const N: usize = 400;
    let th0 = logit(p0).unwrap();
    let (e_lo, e_hi) = (-8.0, 8.0);
    let (u_lo, u_hi) = (-8.0, 4.0);
    let de = (e_hi - e_lo) / N as f64;
    let du = (u_hi - u_lo) / N as f64;
    let mut logw = Vec::with_capacity(N * N);
    for a in 0..N {
        let e = e_lo + (a as f64 + 0.5) * de;
        for b in 0..N {
            let u = u_lo + (b as f64 + 0.5) * du;
            let g = u.exp();
            let lp = log_binom(high.responders, high.enrolled, th0 + e)
                + log_binom(low.responders, low.enrolled, th0 + e - g)
                - e * e / (2.0 * s2_eta)
                - u * u / (2.0 * s2_gamma);
            logw.push((lp, e, g));
        }
    }
    let max = logw.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut h, mut l, mut s) = (0.0, 0.0, 0.0, 0.0);
    for &(lp, e, g) in &logw {
        let w = (lp - max).exp();
        z += w;
        if e >= tau1 {
            h += w;
        }
        if e - g >= tau1 {
            l += w;
        }
        if g >= tau2 {
            s += w;
        }
    }
    Grid2 {
        go_high: h / z,
        go_low: l / z,
        superior: s / z,
    }
}

/// Self-normalized importance sampling from the full prior, Stage-1 data only.
pub fn full_model_tails(y: [u32; 4], cfg: &ModelConfig, n_draws: usize) -> Vec<f64> {
    let h = &cfg.hyper;
    let th0 = cfg.reference_logits().unwrap();
    let tau1 = cfg.tau1().unwrap();
    let prec = Gamma::new(h.alpha_eta, 1.0 / h.beta_eta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut logw = Vec::with_capacity(n_draws);
    let mut hits = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let z: f64 = StandardNormal.sample(&mut rng);
        let eta0 = h.mu_eta0 + h.sigma2_eta0.sqrt() * z;
        let s = (1.0 / prec.sample(&mut rng)).sqrt();
        let mut lw = 0.0;
        let mut hit = [false; 4];
        for j in 0..4 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let e = eta0 + s * z;
            lw += log_binom(y[j], 20, th0[j] + e);
            hit[j] = e >= tau1[j];
        }
        logw.push(lw);
        hits.push(hit);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    (0..4)
        .map(|j| w.iter().zip(&hits).filter(|(_, h)| h[j]).map(|(w, _)| w).sum::<f64>() / z)
        .collect()
}
