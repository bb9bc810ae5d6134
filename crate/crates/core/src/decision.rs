//! Posterior-probability decision rules for both stages.
//!
//! Event probabilities are plain draw fractions with inclusive event
//! comparisons (`eta ≥ tau`); thresholds are strict (`P > s`), so a
//! probability exactly at its threshold yields a negative decision.

use serde::{Deserialize, Serialize};

use crate::error::{MatsError, Result};
use crate::inference::PosteriorDraws;
use crate::model::Thresholds;

/// Final dose choice for an indication that reached Stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum DoseSelection {
    None = 0,
    High = 1,
    Low = 2,
}

impl From<DoseSelection> for u8 {
    fn from(d: DoseSelection) -> u8 {
        d as u8
    }
}

impl TryFrom<u8> for DoseSelection {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Self::None),
            1 => Ok(Self::High),
            2 => Ok(Self::Low),
            other => Err(format!("dose selection must be 0, 1 or 2, got {other}")),
        }
    }
}

/// Stage-2 indicators of one indication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Indicators {
    pub poc_high: bool,
    pub poc_low: bool,
    pub do_flag: bool,
}

/// Stage-2 posterior probabilities of one indication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Probs {
    /// `P(eta ≥ tau1 | data12)`.
    pub poc_high: f64,
    /// `P(eta - gamma ≥ tau1 | data12)`.
    pub poc_low: f64,
    /// `P(gamma ≥ tau2 | data12)`.
    pub dose_opt: f64,
}

/// The four posterior probabilities behind the indicators of one indication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PosteriorProbs {
    /// `P(eta ≥ tau1 | data1)` from the interim analysis.
    pub go: f64,
    #[serde(default)]
    pub poc_high: Option<f64>,
    #[serde(default)]
    pub poc_low: Option<f64>,
    #[serde(default)]
    pub dose_opt: Option<f64>,
}

/// Selection table over `(POC-H, POC-L, DO)`:
///
/// | POC-H | POC-L | DO | result |
/// |-------|-------|----|--------|
/// | 0 | 0 | any | none |
/// | 1 | 1 | 1 | high |
/// | 1 | 0 | any | high |
/// | otherwise | | | low |
pub fn final_dose_selection(poc_high: bool, poc_low: bool, do_flag: bool) -> DoseSelection {
    match (poc_high, poc_low, do_flag) {
        (false, false, _) => DoseSelection::None,
        (true, true, true) => DoseSelection::High,
        (true, false, _) => DoseSelection::High,
        _ => DoseSelection::Low,
    }
}

fn fraction(n_hits: usize, n: usize) -> f64 {
    n_hits as f64 / n as f64
}

/// `P(eta[j] ≥ tau1[j])` per indication.
pub fn efficacy_high_probs(draws: &PosteriorDraws, tau1: &[f64]) -> Result<Vec<f64>> {
    check(draws, tau1)?;
    Ok((0..draws.n_indications())
        .map(|j| fraction(draws.eta(j).filter(|&e| e >= tau1[j]).count(), draws.len()))
        .collect())
}

/// `P(eta[j] - gamma[j] ≥ tau1[j])` for indication `j`.
pub fn efficacy_low_prob(draws: &PosteriorDraws, j: usize, tau1: f64) -> f64 {
    let hits = draws.eta(j).zip(draws.gamma(j)).filter(|(e, g)| e - g >= tau1).count();
    fraction(hits, draws.len())
}

/// `P(gamma[j] ≥ tau2)` for indication `j`.
pub fn superiority_prob(draws: &PosteriorDraws, j: usize, tau2: f64) -> f64 {
    fraction(draws.gamma(j).filter(|&g| g >= tau2).count(), draws.len())
}

fn check(draws: &PosteriorDraws, tau1: &[f64]) -> Result<()> {
    if draws.is_empty() {
        return Err(MatsError::EmptyDraws);
    }
    if tau1.len() != draws.n_indications() {
        return Err(MatsError::DimensionMismatch {
            what: "tau1".into(),
            expected: draws.n_indications(),
            found: tau1.len(),
        });
    }
    Ok(())
}

/// GO (`true`) iff `P(eta[j] ≥ tau1[j]) > s1`.
pub fn stage1_decision(draws: &PosteriorDraws, tau1: &[f64], s1: f64) -> Result<Vec<bool>> {
    Ok(efficacy_high_probs(draws, tau1)?.into_iter().map(|p| p > s1).collect())
}

/// Stage-2 indicators with the probabilities behind them, computed for the
/// indications flagged in `go` and `None` elsewhere.
pub fn stage2_indicators(
    draws: &PosteriorDraws,
    tau1: &[f64],
    tau2: f64,
    thresholds: &Thresholds,
    go: &[bool],
) -> Result<Vec<Option<(Stage2Indicators, Stage2Probs)>>> {
    let high = efficacy_high_probs(draws, tau1)?;
    if go.len() != draws.n_indications() {
        return Err(MatsError::DimensionMismatch {
            what: "go".into(),
            expected: draws.n_indications(),
            found: go.len(),
        });
    }
    Ok((0..draws.n_indications())
        .map(|j| {
            go[j].then(|| {
                let low = efficacy_low_prob(draws, j, tau1[j]);
                let sup = superiority_prob(draws, j, tau2);
                (
                    Stage2Indicators {
                        poc_high: high[j] > thresholds.s2,
                        poc_low: low > thresholds.t2,
                        do_flag: sup > thresholds.w2,
                    },
                    Stage2Probs {
                        poc_high: high[j],
                        poc_low: low,
                        dose_opt: sup,
                    },
                )
            })
        })
        .collect())
}

/// Decisions of one trial. Stage-2 fields are `None` for indications
/// stopped at Stage 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub go_stage1: Vec<bool>,
    pub poc_high: Vec<Option<bool>>,
    pub poc_low: Vec<Option<bool>>,
    pub do_flag: Vec<Option<bool>>,
    #[serde(rename = "final")]
    pub final_selection: Vec<Option<DoseSelection>>,
    pub posterior_probs: Vec<PosteriorProbs>,
    /// Anomalies such as the low dose passing PoC while the high dose fails.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DecisionRecord {
    /// Record after the interim analysis only.
    pub fn interim(go: Vec<bool>, probs: &[f64]) -> Self {
        let j = go.len();
        Self {
            go_stage1: go,
            poc_high: vec![None; j],
            poc_low: vec![None; j],
            do_flag: vec![None; j],
            final_selection: vec![None; j],
            posterior_probs: probs
                .iter()
                .map(|&go| PosteriorProbs {
                    go,
                    ..PosteriorProbs::default()
                })
                .collect(),
            warnings: Vec::new(),
        }
    }

    /// Applies Stage-2 indicators and selects a dose for each GO indication.
    pub fn apply_stage2(&mut self, stage2: Vec<Option<(Stage2Indicators, Stage2Probs)>>) {
        for (j, entry) in stage2.into_iter().enumerate() {
            let Some((ind, probs)) = entry else { continue };
            if !self.go_stage1[j] {
                continue;
            }
            self.poc_high[j] = Some(ind.poc_high);
            self.poc_low[j] = Some(ind.poc_low);
            self.do_flag[j] = Some(ind.do_flag);
            self.final_selection[j] = Some(final_dose_selection(ind.poc_high, ind.poc_low, ind.do_flag));
            let pp = &mut self.posterior_probs[j];
            pp.poc_high = Some(probs.poc_high);
            pp.poc_low = Some(probs.poc_low);
            pp.dose_opt = Some(probs.dose_opt);
            if !ind.poc_high && ind.poc_low {
                self.warnings.push(format!(
                    "indication {}: low dose passed PoC while the high dose did not",
                    j + 1
                ));
            }
        }
    }
}
