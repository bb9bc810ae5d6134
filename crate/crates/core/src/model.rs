//! Domain types and densities for the hierarchical binomial-logit model.
//!
//! Indication `j` has reference rate `p0[j]`. The high dose (DL-H) and the
//! low dose (DL-L) have logit-scale response rates
//!
//! ```text
//! theta_high[j] = logit(p0[j]) + eta[j]
//! theta_low[j]  = theta_high[j] - gamma[j]
//! ```
//!
//! with `eta[j] ~ N(eta0, sigma2_eta)` and `gamma[j] ~ LogNormal(gamma0, sigma2_gamma)`.
//! The hyper-parameters carry normal / inverse-gamma hyper-priors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{FieldError, MatsError, Result};

/// Probabilities inside likelihood terms are clamped to this distance from 0 and 1.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MatsError::Domain(format!("logit requires 0 < p < 1, got {p}")));
    }
    Ok((p / (1.0 - p)).ln())
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logit-scale efficacy margin: `logit((p1* + p0) / 2) - logit(p0)`.
pub fn compute_tau1(p0: f64, p1_star: f64) -> Result<f64> {
    if !(p1_star > p0) {
        return Err(MatsError::Domain(format!(
            "target rate {p1_star} must exceed reference rate {p0}"
        )));
    }
    Ok(logit(0.5 * (p1_star + p0))? - logit(p0)?)
}

/// Posterior-probability cut-offs of the four decision rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Stage-1 GO.
    pub s1: f64,
    /// Stage-2 PoC of the high dose.
    pub s2: f64,
    /// Stage-2 PoC of the low dose.
    pub t2: f64,
    /// Stage-2 dose optimization.
    pub w2: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            s1: 0.5,
            s2: 0.5,
            t2: 0.5,
            w2: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub mu_eta0: f64,
    pub sigma2_eta0: f64,
    pub alpha_eta: f64,
    pub beta_eta: f64,
    pub mu_gamma0: f64,
    pub sigma2_gamma0: f64,
    pub alpha_gamma: f64,
    pub beta_gamma: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            mu_eta0: 0.0,
            sigma2_eta0: 1.0,
            alpha_eta: 10.0,
            beta_eta: 1.0,
            mu_gamma0: 0.0,
            sigma2_gamma0: 1.0,
            alpha_gamma: 2.0,
            beta_gamma: 1.0,
        }
    }
}

/// Enrollment per indication: Stage-1 high dose, Stage-2 high and low arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub stage1: Vec<u32>,
    pub stage2_high: Vec<u32>,
    pub stage2_low: Vec<u32>,
}

impl SamplePlan {
    pub fn uniform(n_indications: usize, stage1: u32, stage2_high: u32, stage2_low: u32) -> Self {
        Self {
            stage1: vec![stage1; n_indications],
            stage2_high: vec![stage2_high; n_indications],
            stage2_low: vec![stage2_low; n_indications],
        }
    }

    /// Total enrollment of indication `j` given its Stage-1 decision.
    pub fn enrolled(&self, j: usize, go: bool) -> u32 {
        if go {
            self.stage1[j] + self.stage2_high[j] + self.stage2_low[j]
        } else {
            self.stage1[j]
        }
    }
}

/// Complete design specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_indications: usize,
    pub reference_rates: Vec<f64>,
    pub target_rates: Vec<f64>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_tau2")]
    pub tau2: f64,
    #[serde(default)]
    pub hyper: HyperPriors,
    pub sample_plan: SamplePlan,
}

fn default_tau2() -> f64 {
    0.4
}

impl Default for ModelConfig {
    /// Four indications, 20 patients per arm per stage, vague hyper-priors,
    /// all thresholds 0.5 and `tau2 = 0.4`.
    fn default() -> Self {
        Self {
            n_indications: 4,
            reference_rates: vec![0.1, 0.2, 0.1, 0.2],
            target_rates: vec![0.4, 0.5, 0.4, 0.5],
            thresholds: Thresholds::default(),
            tau2: default_tau2(),
            hyper: HyperPriors::default(),
            sample_plan: SamplePlan::uniform(4, 20, 20, 20),
        }
    }
}

impl ModelConfig {
    pub fn with_sample_plan(mut self, plan: SamplePlan) -> Self {
        self.sample_plan = plan;
        self
    }

    /// Collects every violated invariant instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let j = self.n_indications;
        if j == 0 {
            errs.push(FieldError::new("n_indications", "must be ≥ 1"));
        }
        let mut check_len = |field: &str, len: usize| {
            if len != j {
                errs.push(FieldError::new(field, format!("expected {j} entries, found {len}")));
            }
        };
        check_len("reference_rates", self.reference_rates.len());
        check_len("target_rates", self.target_rates.len());
        check_len("sample_plan.stage1", self.sample_plan.stage1.len());
        check_len("sample_plan.stage2_high", self.sample_plan.stage2_high.len());
        check_len("sample_plan.stage2_low", self.sample_plan.stage2_low.len());

        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        for (i, &p) in self.reference_rates.iter().enumerate() {
            if !open_unit(p) {
                errs.push(FieldError::new(
                    format!("reference_rates[{i}]"),
                    format!("must lie in (0,1), got {p}"),
                ));
            }
        }
        for (i, &p) in self.target_rates.iter().enumerate() {
            if !open_unit(p) {
                errs.push(FieldError::new(
                    format!("target_rates[{i}]"),
                    format!("must lie in (0,1), got {p}"),
                ));
            } else if let Some(&p0) = self.reference_rates.get(i) {
                if open_unit(p0) && p <= p0 {
                    errs.push(FieldError::new(
                        format!("target_rates[{i}]"),
                        format!("must exceed reference rate {p0}, got {p}"),
                    ));
                }
            }
        }
        let t = &self.thresholds;
        for (name, v) in [
            ("thresholds.s1", t.s1),
            ("thresholds.s2", t.s2),
            ("thresholds.t2", t.t2),
            ("thresholds.w2", t.w2),
        ] {
            if !open_unit(v) {
                errs.push(FieldError::new(name, format!("must lie in (0,1), got {v}")));
            }
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            errs.push(FieldError::new("tau2", format!("must be positive, got {}", self.tau2)));
        }
        let h = &self.hyper;
        for (name, v) in [("hyper.mu_eta0", h.mu_eta0), ("hyper.mu_gamma0", h.mu_gamma0)] {
            if !v.is_finite() {
                errs.push(FieldError::new(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("hyper.sigma2_eta0", h.sigma2_eta0),
            ("hyper.alpha_eta", h.alpha_eta),
            ("hyper.beta_eta", h.beta_eta),
            ("hyper.sigma2_gamma0", h.sigma2_gamma0),
            ("hyper.alpha_gamma", h.alpha_gamma),
            ("hyper.beta_gamma", h.beta_gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(FieldError::new(name, format!("must be positive, got {v}")));
            }
        }
        let plan = &self.sample_plan;
        for (name, v) in [
            ("sample_plan.stage1", &plan.stage1),
            ("sample_plan.stage2_high", &plan.stage2_high),
            ("sample_plan.stage2_low", &plan.stage2_low),
        ] {
            for (i, &n) in v.iter().enumerate() {
                if n == 0 {
                    errs.push(FieldError::new(format!("{name}[{i}]"), "must be ≥ 1"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(MatsError::InvalidConfig(errs))
        }
    }

    /// Per-indication efficacy margins on the logit scale.
    pub fn tau1(&self) -> Result<Vec<f64>> {
        self.reference_rates
            .iter()
            .zip(&self.target_rates)
            .map(|(&p0, &p1)| compute_tau1(p0, p1))
            .collect()
    }

    /// `logit(p0[j])` for every indication.
    pub fn reference_logits(&self) -> Result<Vec<f64>> {
        self.reference_rates.iter().map(|&p| logit(p)).collect()
    }
}

/// Responders out of enrolled patients in one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub responders: u32,
    pub enrolled: u32,
}

impl Counts {
    pub fn new(responders: u32, enrolled: u32) -> Self {
        Self { responders, enrolled }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Counts {
    pub high: Counts,
    pub low: Counts,
}

/// Observed counts per indication and the Stage-1 decisions that gate Stage 2.
///
/// When `stage1_decisions` is omitted from JSON it is derived from which
/// indications carry Stage-2 counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "TrialDataRepr")]
pub struct TrialData {
    pub stage1: Vec<Counts>,
    pub stage1_decisions: Vec<bool>,
    pub stage2: Vec<Option<Stage2Counts>>,
}

#[derive(Deserialize)]
struct TrialDataRepr {
    stage1: Vec<Counts>,
    #[serde(default)]
    stage1_decisions: Option<Vec<bool>>,
    #[serde(default)]
    stage2: Option<Vec<Option<Stage2Counts>>>,
}

impl From<TrialDataRepr> for TrialData {
    fn from(r: TrialDataRepr) -> Self {
        let stage2 = r.stage2.unwrap_or_else(|| vec![None; r.stage1.len()]);
        let stage1_decisions = r
            .stage1_decisions
            .unwrap_or_else(|| stage2.iter().map(Option::is_some).collect());
        Self {
            stage1: r.stage1,
            stage1_decisions,
            stage2,
        }
    }
}

impl TrialData {
    /// Stage-1 data only, before any decision.
    pub fn stage1_only(stage1: Vec<Counts>) -> Self {
        let j = stage1.len();
        Self {
            stage1,
            stage1_decisions: vec![false; j],
            stage2: vec![None; j],
        }
    }

    /// Stage-1 plus Stage-2 counts; decisions are implied by Stage-2 presence.
    pub fn with_stage2(stage1: Vec<Counts>, stage2: Vec<Option<Stage2Counts>>) -> Self {
        let stage1_decisions = stage2.iter().map(Option::is_some).collect();
        Self {
            stage1,
            stage1_decisions,
            stage2,
        }
    }

    pub fn n_indications(&self) -> usize {
        self.stage1.len()
    }

    pub fn any_go(&self) -> bool {
        self.stage1_decisions.iter().any(|&d| d)
    }

    /// Checks `y ≤ n` everywhere and that Stage-2 counts exist iff GO.
    pub fn validate(&self, n_indications: usize) -> Result<()> {
        let mut errs = Vec::new();
        for (field, len) in [
            ("stage1", self.stage1.len()),
            ("stage1_decisions", self.stage1_decisions.len()),
            ("stage2", self.stage2.len()),
        ] {
            if len != n_indications {
                errs.push(FieldError::new(
                    field,
                    format!("expected {n_indications} entries, found {len}"),
                ));
            }
        }
        let mut check = |field: String, c: &Counts| {
            if c.responders > c.enrolled {
                errs.push(FieldError::new(
                    field,
                    format!("responders ({}) exceed enrolled ({})", c.responders, c.enrolled),
                ));
            }
        };
        for (j, c) in self.stage1.iter().enumerate() {
            check(format!("stage1[{j}]"), c);
        }
        for (j, s2) in self.stage2.iter().enumerate() {
            if let Some(s2) = s2 {
                check(format!("stage2[{j}].high"), &s2.high);
                check(format!("stage2[{j}].low"), &s2.low);
            }
        }
        for (j, (d, s2)) in self.stage1_decisions.iter().zip(&self.stage2).enumerate() {
            if *d != s2.is_some() {
                errs.push(FieldError::new(
                    format!("stage2[{j}]"),
                    if *d {
                        "indication went to Stage 2 but has no Stage-2 counts"
                    } else {
                        "Stage-2 counts present for an indication stopped at Stage 1"
                    },
                ));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(MatsError::InvalidData(errs))
        }
    }

    /// Pooled high-dose counts (Stage 1 plus Stage-2 high arm) for indication `j`.
    pub fn high_dose_totals(&self, j: usize) -> Counts {
        let s1 = self.stage1[j];
        match (self.stage1_decisions[j], &self.stage2[j]) {
            (true, Some(s2)) => Counts::new(s1.responders + s2.high.responders, s1.enrolled + s2.high.enrolled),
            _ => s1,
        }
    }

    /// Low-dose counts for indication `j`; empty when it never reached Stage 2.
    pub fn low_dose_totals(&self, j: usize) -> Counts {
        match (self.stage1_decisions[j], &self.stage2[j]) {
            (true, Some(s2)) => s2.low,
            _ => Counts::default(),
        }
    }
}

/// One point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub eta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub eta0: f64,
    pub sigma2_eta: f64,
    pub gamma0: f64,
    pub sigma2_gamma: f64,
}

impl ModelState {
    /// `eta = 0`, `gamma = 1`, hyper-means at their prior means and variances
    /// at their inverse-gamma prior means (or `beta` when `alpha ≤ 1`).
    pub fn initial(config: &ModelConfig) -> Self {
        let h = &config.hyper;
        let ig_mean = |a: f64, b: f64| if a > 1.0 { b / (a - 1.0) } else { b };
        Self {
            eta: vec![0.0; config.n_indications],
            gamma: vec![1.0; config.n_indications],
            eta0: h.mu_eta0,
            sigma2_eta: ig_mean(h.alpha_eta, h.beta_eta),
            gamma0: h.mu_gamma0,
            sigma2_gamma: ig_mean(h.alpha_gamma, h.beta_gamma),
        }
    }

    pub fn in_support(&self) -> bool {
        self.gamma.iter().all(|&g| g > 0.0 && g.is_finite())
            && self.eta.iter().all(|e| e.is_finite())
            && self.sigma2_eta > 0.0
            && self.sigma2_gamma > 0.0
            && self.eta0.is_finite()
            && self.gamma0.is_finite()
    }

    /// High-dose response rate of indication `j` given `theta0 = logit(p0[j])`.
    pub fn p_high(&self, j: usize, theta0: f64) -> f64 {
        inv_logit(theta0 + self.eta[j])
    }

    pub fn p_low(&self, j: usize, theta0: f64) -> f64 {
        inv_logit(theta0 + self.eta[j] - self.gamma[j])
    }
}

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

/// Log density of `LogNormal(mu, var)` at `x`; `-inf` for `x ≤ 0`.
pub fn log_lognormal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let lx = x.ln();
    log_normal_pdf(lx, mu, var) - lx
}

/// Log density of `Inv-Gamma(shape, scale)` at `x`; `-inf` for `x ≤ 0`.
pub fn log_inv_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn ln_choose(n: u32, k: u32) -> f64 {
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Number of probabilities pushed onto [`PROBABILITY_FLOOR`] during evaluation.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ClampCount(pub u64);

/// Binomial log-kernel `y ln p + (n - y) ln(1 - p)` at logit-scale rate `theta`.
pub(crate) fn binomial_kernel(c: Counts, theta: f64, clamps: &mut ClampCount) -> f64 {
    if c.enrolled == 0 {
        return 0.0;
    }
    let mut p = inv_logit(theta);
    if p < PROBABILITY_FLOOR {
        p = PROBABILITY_FLOOR;
        clamps.0 += 1;
    } else if p > 1.0 - PROBABILITY_FLOOR {
        p = 1.0 - PROBABILITY_FLOOR;
        clamps.0 += 1;
    }
    let y = c.responders as f64;
    let f = (c.enrolled - c.responders) as f64;
    y * p.ln() + f * (1.0 - p).ln()
}

fn log_binomial_pmf(c: Counts, theta: f64, clamps: &mut ClampCount) -> f64 {
    if c.enrolled == 0 {
        return 0.0;
    }
    ln_choose(c.enrolled, c.responders) + binomial_kernel(c, theta, clamps)
}

/// Log of the joint density of data and parameters, binomial coefficients included.
///
/// Returns `-inf` outside the support (`gamma[j] ≤ 0` or a non-positive variance).
pub fn log_joint(state: &ModelState, data: &TrialData, config: &ModelConfig) -> Result<f64> {
    let mut clamps = ClampCount::default();
    log_joint_counted(state, data, config, &mut clamps)
}

pub fn log_joint_counted(
    state: &ModelState,
    data: &TrialData,
    config: &ModelConfig,
    clamps: &mut ClampCount,
) -> Result<f64> {
    let j_count = config.n_indications;
    for (what, len) in [
        ("state.eta", state.eta.len()),
        ("state.gamma", state.gamma.len()),
        ("data.stage1", data.stage1.len()),
        ("data.stage1_decisions", data.stage1_decisions.len()),
        ("data.stage2", data.stage2.len()),
        ("config.reference_rates", config.reference_rates.len()),
    ] {
        if len != j_count {
            return Err(MatsError::DimensionMismatch {
                what: what.into(),
                expected: j_count,
                found: len,
            });
        }
    }
    if !state.in_support() {
        return Ok(f64::NEG_INFINITY);
    }
    let h = &config.hyper;
    let theta0 = config.reference_logits()?;
    let mut total = 0.0;
    for (j, &t0) in theta0.iter().enumerate().take(j_count) {
        let th_high = t0 + state.eta[j];
        let th_low = th_high - state.gamma[j];
        total += log_binomial_pmf(data.stage1[j], th_high, clamps);
        if data.stage1_decisions[j] {
            if let Some(s2) = &data.stage2[j] {
                total += log_binomial_pmf(s2.high, th_high, clamps);
                total += log_binomial_pmf(s2.low, th_low, clamps);
            }
        }
        total += log_normal_pdf(state.eta[j], state.eta0, state.sigma2_eta);
        total += log_lognormal_pdf(state.gamma[j], state.gamma0, state.sigma2_gamma);
    }
    total += log_normal_pdf(state.eta0, h.mu_eta0, h.sigma2_eta0);
    total += log_inv_gamma_pdf(state.sigma2_eta, h.alpha_eta, h.beta_eta);
    total += log_normal_pdf(state.gamma0, h.mu_gamma0, h.sigma2_gamma0);
    total += log_inv_gamma_pdf(state.sigma2_gamma, h.alpha_gamma, h.beta_gamma);
    Ok(total)
}
