//! Metropolis-within-Gibbs sampler for the hierarchical model.
//!
//! Each sweep updates every `eta[j]` by a Gaussian random walk, every `gamma[j]`
//! by a Gaussian random walk on `ln gamma[j]`, then draws `eta0`, `sigma2_eta`,
//! `gamma0` and `sigma2_gamma` from their exact conditionals. Two block moves
//! then shift `eta0` with every `eta[j]`, and `ln gamma0` with every
//! `ln gamma[j]`, by a common random offset; these leave the centred
//! deviations unchanged and fix the slow mixing of the population means.
//! Proposal scales adapt toward the target acceptance rate during burn-in only.

pub mod conjugate;
pub mod diagnostics;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MatsError, Result};
use crate::model::{
    binomial_kernel, log_lognormal_pdf, log_normal_pdf, ClampCount, Counts, ModelConfig, ModelState, TrialData,
};

pub use diagnostics::{Diagnostics, ParameterDiagnostics, Summary};

/// Random-number generator owned by one sampler run.
pub type SamplerRng = ChaCha8Rng;

/// Post-burn-in iteration counts below this trigger a warning.
pub const MIN_DECISION_ITERATIONS: usize = 1000;

const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    /// Post-burn-in iterations (before thinning).
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Iterations between proposal-scale adaptations during burn-in.
    pub adapt_window: usize,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            n_iterations: 4000,
            burn_in: 2000,
            thin: 1,
            adapt_window: 50,
            target_accept: 0.44,
            seed: 42,
        }
    }
}

impl McmcSettings {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::FieldError;
        let mut errs = Vec::new();
        if self.n_iterations == 0 {
            errs.push(FieldError::new("settings.n_iterations", "must be ≥ 1"));
        }
        if self.thin == 0 {
            errs.push(FieldError::new("settings.thin", "must be ≥ 1"));
        }
        if self.adapt_window == 0 {
            errs.push(FieldError::new("settings.adapt_window", "must be ≥ 1"));
        }
        if self.n_iterations / self.thin.max(1) == 0 && self.n_iterations > 0 {
            errs.push(FieldError::new(
                "settings.thin",
                "must not exceed n_iterations (no draws would be kept)",
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            errs.push(FieldError::new("settings.target_accept", "must lie in (0,1)"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(MatsError::InvalidConfig(errs))
        }
    }

    /// Number of stored draws: `n_iterations / thin`, rounded down.
    pub fn kept_draws(&self) -> usize {
        self.n_iterations / self.thin
    }
}

/// Hyper-parameters held fixed instead of sampled, giving the reduced model
/// `eta[j] ~ N(eta0, sigma2_eta)`, `gamma[j] ~ LogNormal(gamma0, sigma2_gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinnedHypers {
    pub eta0: f64,
    pub sigma2_eta: f64,
    pub gamma0: f64,
    pub sigma2_gamma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub pinned: Option<PinnedHypers>,
    /// Starting proposal scales; defaults to 1.0 for every coordinate.
    pub initial_scales: Option<ProposalScales>,
}

/// Random-walk standard deviations, per indication, plus the block-shift scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub eta: Vec<f64>,
    /// Scale on `ln gamma`.
    pub log_gamma: Vec<f64>,
    #[serde(default = "one")]
    pub eta_shift: f64,
    #[serde(default = "one")]
    pub log_gamma_shift: f64,
}

fn one() -> f64 {
    1.0
}

impl ProposalScales {
    pub fn uniform(n_indications: usize, scale: f64) -> Self {
        Self {
            eta: vec![scale; n_indications],
            log_gamma: vec![scale; n_indications],
            eta_shift: scale,
            log_gamma_shift: scale,
        }
    }
}

/// Which proposals were accepted in one sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Acceptance {
    pub eta: Vec<bool>,
    pub gamma: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub eta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Block shifts; zero when the hyper-parameters are pinned.
    #[serde(default)]
    pub eta_shift: f64,
    #[serde(default)]
    pub gamma_shift: f64,
}

/// Stored draws, one [`ModelState`] per kept iteration, in column layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    n_indications: usize,
    /// `eta[i * J + j]` is indication `j` in draw `i`.
    eta: Vec<f64>,
    gamma: Vec<f64>,
    eta0: Vec<f64>,
    sigma2_eta: Vec<f64>,
    gamma0: Vec<f64>,
    sigma2_gamma: Vec<f64>,
    /// Post-burn-in acceptance fractions.
    pub acceptance_rates: AcceptanceRates,
    /// Proposal scales frozen at the end of burn-in.
    pub final_scales: ProposalScales,
    /// Likelihood evaluations whose probability hit the numerical floor.
    pub clamped_evaluations: u64,
}

impl PosteriorDraws {
    fn with_capacity(n_indications: usize, n: usize) -> Self {
        Self {
            n_indications,
            eta: Vec::with_capacity(n * n_indications),
            gamma: Vec::with_capacity(n * n_indications),
            eta0: Vec::with_capacity(n),
            sigma2_eta: Vec::with_capacity(n),
            gamma0: Vec::with_capacity(n),
            sigma2_gamma: Vec::with_capacity(n),
            acceptance_rates: AcceptanceRates {
                eta: vec![0.0; n_indications],
                gamma: vec![0.0; n_indications],
                eta_shift: 0.0,
                gamma_shift: 0.0,
            },
            final_scales: ProposalScales::uniform(n_indications, 1.0),
            clamped_evaluations: 0,
        }
    }

    /// Builds draws from explicit states, e.g. to evaluate decision rules on
    /// hand-constructed posteriors.
    pub fn from_states(n_indications: usize, states: &[ModelState]) -> Result<Self> {
        let mut d = Self::with_capacity(n_indications, states.len());
        for s in states {
            if s.eta.len() != n_indications || s.gamma.len() != n_indications {
                return Err(MatsError::DimensionMismatch {
                    what: "state".into(),
                    expected: n_indications,
                    found: s.eta.len().min(s.gamma.len()),
                });
            }
            d.push(s);
        }
        Ok(d)
    }

    fn push(&mut self, s: &ModelState) {
        self.eta.extend_from_slice(&s.eta);
        self.gamma.extend_from_slice(&s.gamma);
        self.eta0.push(s.eta0);
        self.sigma2_eta.push(s.sigma2_eta);
        self.gamma0.push(s.gamma0);
        self.sigma2_gamma.push(s.sigma2_gamma);
    }

    pub fn len(&self) -> usize {
        self.eta0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta0.is_empty()
    }

    pub fn n_indications(&self) -> usize {
        self.n_indications
    }

    pub fn state(&self, i: usize) -> ModelState {
        let j = self.n_indications;
        ModelState {
            eta: self.eta[i * j..(i + 1) * j].to_vec(),
            gamma: self.gamma[i * j..(i + 1) * j].to_vec(),
            eta0: self.eta0[i],
            sigma2_eta: self.sigma2_eta[i],
            gamma0: self.gamma0[i],
            sigma2_gamma: self.sigma2_gamma[i],
        }
    }

    pub fn eta(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.eta.iter().skip(j).step_by(self.n_indications).copied()
    }

    pub fn gamma(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.gamma.iter().skip(j).step_by(self.n_indications).copied()
    }

    pub fn eta0(&self) -> &[f64] {
        &self.eta0
    }

    pub fn sigma2_eta(&self) -> &[f64] {
        &self.sigma2_eta
    }

    pub fn gamma0(&self) -> &[f64] {
        &self.gamma0
    }

    pub fn sigma2_gamma(&self) -> &[f64] {
        &self.sigma2_gamma
    }

    /// Every scalar chain with its column name (`eta[1]`, ..., `sigma2_gamma`).
    /// Indication indices in names are 1-based.
    pub fn columns(&self) -> Vec<(String, Vec<f64>)> {
        let mut cols = Vec::with_capacity(2 * self.n_indications + 4);
        for j in 0..self.n_indications {
            cols.push((format!("eta[{}]", j + 1), self.eta(j).collect()));
        }
        for j in 0..self.n_indications {
            cols.push((format!("gamma[{}]", j + 1), self.gamma(j).collect()));
        }
        cols.push(("eta0".into(), self.eta0.clone()));
        cols.push(("sigma2_eta".into(), self.sigma2_eta.clone()));
        cols.push(("gamma0".into(), self.gamma0.clone()));
        cols.push(("sigma2_gamma".into(), self.sigma2_gamma.clone()));
        cols
    }

    /// Split R-hat and ESS per scalar parameter.
    pub fn diagnostics(&self) -> Diagnostics {
        let parameters: Vec<_> = self
            .columns()
            .iter()
            .map(|(name, chain)| diagnostics::diagnose(name, chain))
            .collect();
        let flagged = parameters
            .iter()
            .filter(|p| !(p.split_rhat <= diagnostics::RHAT_FLAG))
            .map(|p| p.name.clone())
            .collect();
        Diagnostics { parameters, flagged }
    }

    /// Writes one CSV row per draw with a header of column names.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cols = self.columns();
        let header: Vec<&str> = cols.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = cols.iter().map(|(_, c)| c[i].to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Per-indication sufficient statistics and prior constants for one fit.
struct Target<'a> {
    config: &'a ModelConfig,
    theta0: Vec<f64>,
    high: Vec<Counts>,
    low: Vec<Counts>,
    clamps: ClampCount,
}

impl<'a> Target<'a> {
    fn new(data: &TrialData, config: &'a ModelConfig) -> Result<Self> {
        let j = config.n_indications;
        for (what, len) in [
            ("data.stage1", data.stage1.len()),
            ("data.stage1_decisions", data.stage1_decisions.len()),
            ("data.stage2", data.stage2.len()),
        ] {
            if len != j {
                return Err(MatsError::DimensionMismatch {
                    what: what.into(),
                    expected: j,
                    found: len,
                });
            }
        }
        Ok(Self {
            config,
            theta0: config.reference_logits()?,
            high: (0..j).map(|k| data.high_dose_totals(k)).collect(),
            low: (0..j).map(|k| data.low_dose_totals(k)).collect(),
            clamps: ClampCount::default(),
        })
    }

    /// Log full conditional of `eta[j]` up to a constant.
    fn eta_log_target(&mut self, j: usize, eta: f64, s: &ModelState) -> f64 {
        let th = self.theta0[j] + eta;
        let d = eta - s.eta0;
        binomial_kernel(self.high[j], th, &mut self.clamps)
            + binomial_kernel(self.low[j], th - s.gamma[j], &mut self.clamps)
            - d * d / (2.0 * s.sigma2_eta)
    }

    /// Log full conditional of `ln gamma[j]`, including the Jacobian `+ ln gamma`.
    fn log_gamma_log_target(&mut self, j: usize, log_gamma: f64, s: &ModelState) -> f64 {
        let g = log_gamma.exp();
        let th_low = self.theta0[j] + s.eta[j] - g;
        binomial_kernel(self.low[j], th_low, &mut self.clamps)
            + log_lognormal_pdf(g, s.gamma0, s.sigma2_gamma)
            + log_gamma
    }

    fn update_effects<R: Rng + ?Sized>(
        &mut self,
        state: &mut ModelState,
        scales: &ProposalScales,
        rng: &mut R,
        accepted: &mut Acceptance,
    ) {
        for j in 0..self.config.n_indications {
            let cur = state.eta[j];
            let z: f64 = StandardNormal.sample(rng);
            let prop = cur + scales.eta[j] * z;
            let log_ratio = self.eta_log_target(j, prop, state) - self.eta_log_target(j, cur, state);
            let u: f64 = rng.random();
            accepted.eta[j] = u.ln() < log_ratio;
            if accepted.eta[j] {
                state.eta[j] = prop;
            }
        }
        for j in 0..self.config.n_indications {
            let cur = state.gamma[j].ln();
            let z: f64 = StandardNormal.sample(rng);
            let prop = cur + scales.log_gamma[j] * z;
            let log_ratio = self.log_gamma_log_target(j, prop, state) - self.log_gamma_log_target(j, cur, state);
            let u: f64 = rng.random();
            let new_gamma = prop.exp();
            accepted.gamma[j] = u.ln() < log_ratio && new_gamma > 0.0 && new_gamma.is_finite();
            if accepted.gamma[j] {
                state.gamma[j] = new_gamma;
            }
        }
    }

    /// Moves `eta0` and every `eta[j]` by one common offset.
    fn shift_eta<R: Rng + ?Sized>(&mut self, state: &mut ModelState, scale: f64, rng: &mut R) -> bool {
        let z: f64 = StandardNormal.sample(rng);
        let delta = scale * z;
        let h = &self.config.hyper;
        let mut log_ratio = log_normal_pdf(state.eta0 + delta, h.mu_eta0, h.sigma2_eta0)
            - log_normal_pdf(state.eta0, h.mu_eta0, h.sigma2_eta0);
        for j in 0..self.config.n_indications {
            let th = self.theta0[j] + state.eta[j];
            let g = state.gamma[j];
            log_ratio += binomial_kernel(self.high[j], th + delta, &mut self.clamps)
                + binomial_kernel(self.low[j], th + delta - g, &mut self.clamps)
                - binomial_kernel(self.high[j], th, &mut self.clamps)
                - binomial_kernel(self.low[j], th - g, &mut self.clamps);
        }
        let u: f64 = rng.random();
        let accept = u.ln() < log_ratio;
        if accept {
            state.eta0 += delta;
            state.eta.iter_mut().for_each(|e| *e += delta);
        }
        accept
    }

    /// Moves `gamma0` and every `ln gamma[j]` by one common offset.
    fn shift_log_gamma<R: Rng + ?Sized>(&mut self, state: &mut ModelState, scale: f64, rng: &mut R) -> bool {
        let z: f64 = StandardNormal.sample(rng);
        let delta = scale * z;
        let h = &self.config.hyper;
        let mut log_ratio = log_normal_pdf(state.gamma0 + delta, h.mu_gamma0, h.sigma2_gamma0)
            - log_normal_pdf(state.gamma0, h.mu_gamma0, h.sigma2_gamma0);
        let factor = delta.exp();
        for j in 0..self.config.n_indications {
            let th = self.theta0[j] + state.eta[j];
            let g = state.gamma[j];
            log_ratio += binomial_kernel(self.low[j], th - g * factor, &mut self.clamps)
                - binomial_kernel(self.low[j], th - g, &mut self.clamps);
        }
        let u: f64 = rng.random();
        let accept = u.ln() < log_ratio && state.gamma.iter().all(|g| (g * factor).is_finite() && g * factor > 0.0);
        if accept {
            state.gamma0 += delta;
            state.gamma.iter_mut().for_each(|g| *g *= factor);
        }
        accept
    }
}

/// One random-walk sweep over every `eta[j]` and `ln gamma[j]`.
///
/// Rejected proposals keep the current value.
pub fn mh_update_effects<R: Rng + ?Sized>(
    state: &ModelState,
    data: &TrialData,
    config: &ModelConfig,
    scales: &ProposalScales,
    rng: &mut R,
) -> Result<(ModelState, Acceptance)> {
    let mut target = Target::new(data, config)?;
    let mut next = state.clone();
    let j = config.n_indications;
    let mut acc = Acceptance {
        eta: vec![false; j],
        gamma: vec![false; j],
    };
    target.update_effects(&mut next, scales, rng, &mut acc);
    Ok((next, acc))
}

/// Redraws `eta0`, `sigma2_eta`, `gamma0`, `sigma2_gamma` in that order, each
/// from its exact conditional given the current effects.
pub fn gibbs_update_hypers<R: Rng + ?Sized>(state: &ModelState, config: &ModelConfig, rng: &mut R) -> ModelState {
    let mut next = state.clone();
    let mut log_gamma = Vec::with_capacity(state.gamma.len());
    gibbs_in_place(&mut next, config, rng, &mut log_gamma);
    next
}

fn gibbs_in_place<R: Rng + ?Sized>(s: &mut ModelState, config: &ModelConfig, rng: &mut R, log_gamma: &mut Vec<f64>) {
    use conjugate::*;
    let h = &config.hyper;
    let (m, v) = normal_mean_posterior(&s.eta, s.sigma2_eta, h.mu_eta0, h.sigma2_eta0);
    s.eta0 = sample_normal(rng, m, v);
    let (a, b) = inv_gamma_variance_posterior(&s.eta, s.eta0, h.alpha_eta, h.beta_eta);
    s.sigma2_eta = sample_inv_gamma(rng, a, b);

    log_gamma.clear();
    log_gamma.extend(s.gamma.iter().map(|g| g.ln()));
    let (m, v) = normal_mean_posterior(log_gamma, s.sigma2_gamma, h.mu_gamma0, h.sigma2_gamma0);
    s.gamma0 = sample_normal(rng, m, v);
    let (a, b) = inv_gamma_variance_posterior(log_gamma, s.gamma0, h.alpha_gamma, h.beta_gamma);
    s.sigma2_gamma = sample_inv_gamma(rng, a, b);
}

/// Runs the sampler with default options (all hyper-parameters sampled).
pub fn sample_posterior(data: &TrialData, config: &ModelConfig, settings: &McmcSettings) -> Result<PosteriorDraws> {
    sample_posterior_with(data, config, settings, &SamplerOptions::default())
}

pub fn sample_posterior_with(
    data: &TrialData,
    config: &ModelConfig,
    settings: &McmcSettings,
    options: &SamplerOptions,
) -> Result<PosteriorDraws> {
    settings.validate()?;
    if settings.n_iterations < MIN_DECISION_ITERATIONS {
        log::warn!(
            "n_iterations = {} is below {} and not recommended for decisions",
            settings.n_iterations,
            MIN_DECISION_ITERATIONS
        );
    }
    let j_count = config.n_indications;
    let mut target = Target::new(data, config)?;
    let mut rng = SamplerRng::seed_from_u64(settings.seed);

    let mut state = ModelState::initial(config);
    if let Some(p) = options.pinned {
        state.eta0 = p.eta0;
        state.sigma2_eta = p.sigma2_eta;
        state.gamma0 = p.gamma0;
        state.sigma2_gamma = p.sigma2_gamma;
    }
    let mut scales = options
        .initial_scales
        .clone()
        .unwrap_or_else(|| ProposalScales::uniform(j_count, 1.0));
    if scales.eta.len() != j_count || scales.log_gamma.len() != j_count {
        return Err(MatsError::DimensionMismatch {
            what: "initial_scales".into(),
            expected: j_count,
            found: scales.eta.len().min(scales.log_gamma.len()),
        });
    }

    let mut draws = PosteriorDraws::with_capacity(j_count, settings.kept_draws());
    let mut acc = Acceptance {
        eta: vec![false; j_count],
        gamma: vec![false; j_count],
    };
    let mut window_eta = vec![0usize; j_count];
    let mut window_gamma = vec![0usize; j_count];
    let mut kept_eta = vec![0usize; j_count];
    let mut kept_gamma = vec![0usize; j_count];
    let mut window_shift = [0usize; 2];
    let mut kept_shift = [0usize; 2];
    let mut n_windows = 0usize;
    let mut log_gamma_buf = Vec::with_capacity(j_count);

    let total = settings.burn_in + settings.n_iterations;
    for iter in 0..total {
        target.update_effects(&mut state, &scales, &mut rng, &mut acc);
        let mut shifted = [false; 2];
        if options.pinned.is_none() {
            gibbs_in_place(&mut state, config, &mut rng, &mut log_gamma_buf);
            shifted[0] = target.shift_eta(&mut state, scales.eta_shift, &mut rng);
            shifted[1] = target.shift_log_gamma(&mut state, scales.log_gamma_shift, &mut rng);
        }

        if iter < settings.burn_in {
            for j in 0..j_count {
                window_eta[j] += acc.eta[j] as usize;
                window_gamma[j] += acc.gamma[j] as usize;
            }
            window_shift[0] += shifted[0] as usize;
            window_shift[1] += shifted[1] as usize;
            if (iter + 1) % settings.adapt_window == 0 {
                n_windows += 1;
                let gain = 1.0 / (n_windows as f64).sqrt();
                let w = settings.adapt_window as f64;
                let adapt = |scale: &mut f64, hits: usize| {
                    let rate = hits as f64 / w;
                    *scale = (*scale * (gain * (rate - settings.target_accept)).exp()).clamp(MIN_SCALE, MAX_SCALE);
                };
                if options.pinned.is_none() {
                    adapt(&mut scales.eta_shift, window_shift[0]);
                    adapt(&mut scales.log_gamma_shift, window_shift[1]);
                }
                window_shift = [0; 2];
                for j in 0..j_count {
                    adapt(&mut scales.eta[j], window_eta[j]);
                    adapt(&mut scales.log_gamma[j], window_gamma[j]);
                    window_eta[j] = 0;
                    window_gamma[j] = 0;
                }
            }
        } else {
            for j in 0..j_count {
                kept_eta[j] += acc.eta[j] as usize;
                kept_gamma[j] += acc.gamma[j] as usize;
            }
            kept_shift[0] += shifted[0] as usize;
            kept_shift[1] += shifted[1] as usize;
            let post = iter - settings.burn_in;
            if (post + 1).is_multiple_of(settings.thin) {
                draws.push(&state);
            }
        }
    }

    let n = settings.n_iterations as f64;
    draws.acceptance_rates = AcceptanceRates {
        eta: kept_eta.iter().map(|&k| k as f64 / n).collect(),
        gamma: kept_gamma.iter().map(|&k| k as f64 / n).collect(),
        eta_shift: kept_shift[0] as f64 / n,
        gamma_shift: kept_shift[1] as f64 / n,
    };
    draws.final_scales = scales;
    draws.clamped_evaluations = target.clamps.0;
    if draws.clamped_evaluations > 0 {
        log::debug!(
            "{} likelihood evaluations clamped to the probability floor",
            draws.clamped_evaluations
        );
    }
    Ok(draws)
}
