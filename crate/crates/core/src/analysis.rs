//! Interim and final analyses of a trial dataset.
//!
//! The simulator calls [`interim_decision`] and [`final_decision`] directly,
//! so simulated replicates and real trials share one decision path.

use serde::{Deserialize, Serialize};

use crate::decision::{efficacy_high_probs, stage2_indicators, DecisionRecord, PosteriorProbs};
use crate::error::{MatsError, Result};
use crate::inference::diagnostics::{summarize, Summary};
use crate::inference::{sample_posterior, McmcSettings, PosteriorDraws};
use crate::model::{inv_logit, ModelConfig, TrialData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// End of Stage 1: GO / No-Go.
    Interim,
    /// End of Stage 2: PoC and dose selection.
    Final,
}

impl std::str::FromStr for Stage {
    type Err = MatsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interim" => Ok(Stage::Interim),
            "final" => Ok(Stage::Final),
            other => Err(MatsError::Stage(format!(
                "stage must be `interim` or `final`, got `{other}`"
            ))),
        }
    }
}

/// Fits Stage-1 data and applies the GO rule.
pub fn interim_decision(
    data: &TrialData,
    config: &ModelConfig,
    settings: &McmcSettings,
) -> Result<(DecisionRecord, PosteriorDraws)> {
    let stage1 = TrialData::stage1_only(data.stage1.clone());
    let draws = sample_posterior(&stage1, config, settings)?;
    let tau1 = config.tau1()?;
    let probs = efficacy_high_probs(&draws, &tau1)?;
    let go = probs.iter().map(|&p| p > config.thresholds.s1).collect();
    Ok((DecisionRecord::interim(go, &probs), draws))
}

/// Fits all data and applies the Stage-2 rules to every GO indication of `record`.
pub fn final_decision(
    data: &TrialData,
    config: &ModelConfig,
    settings: &McmcSettings,
    mut record: DecisionRecord,
) -> Result<(DecisionRecord, PosteriorDraws)> {
    let draws = sample_posterior(data, config, settings)?;
    let tau1 = config.tau1()?;
    let stage2 = stage2_indicators(&draws, &tau1, config.tau2, &config.thresholds, &data.stage1_decisions)?;
    record.apply_stage2(stage2);
    Ok((record, draws))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub stage: Stage,
    pub posterior_summaries: Vec<Summary>,
    pub decision_probs: Vec<PosteriorProbs>,
    pub decisions: DecisionRecord,
    /// Summaries of `p_high[j]` and `p_low[j]`.
    pub derived_rates: Vec<Summary>,
    /// Parameters whose split R-hat exceeds the convergence flag.
    pub not_converged: Vec<String>,
    pub acceptance_rates: crate::inference::AcceptanceRates,
    pub seed: u64,
}

fn derived_rates(draws: &PosteriorDraws, config: &ModelConfig) -> Result<Vec<Summary>> {
    let theta0 = config.reference_logits()?;
    let mut out = Vec::with_capacity(2 * config.n_indications);
    for (j, &th) in theta0.iter().enumerate() {
        let high: Vec<f64> = draws.eta(j).map(|e| inv_logit(th + e)).collect();
        out.push(summarize(&format!("p_high[{}]", j + 1), &high));
    }
    for (j, &th) in theta0.iter().enumerate() {
        let low: Vec<f64> = draws
            .eta(j)
            .zip(draws.gamma(j))
            .map(|(e, g)| inv_logit(th + e - g))
            .collect();
        out.push(summarize(&format!("p_low[{}]", j + 1), &low));
    }
    Ok(out)
}

/// Interim analysis uses the Stage-1 counts only (any Stage-2 counts are
/// ignored). Final analysis recomputes the interim probabilities, keeps the
/// recorded Stage-1 decisions and fits all data with `settings.seed`.
pub fn analyze(
    data: &TrialData,
    config: &ModelConfig,
    settings: &McmcSettings,
    stage: Stage,
) -> Result<AnalysisReport> {
    config.validate()?;
    settings.validate()?;
    data.validate(config.n_indications)?;

    let (record, draws) = match stage {
        Stage::Interim => interim_decision(data, config, settings)?,
        Stage::Final => {
            if !data.any_go() {
                return Err(MatsError::Stage(
                    "nothing to analyze at Stage 2: no indication went to Stage 2".into(),
                ));
            }
            let interim_settings = settings.clone().with_seed(settings.seed.wrapping_add(1));
            let (mut interim, _) = interim_decision(data, config, &interim_settings)?;
            interim.go_stage1 = data.stage1_decisions.clone();
            final_decision(data, config, settings, interim)?
        }
    };
    let diag = draws.diagnostics();
    Ok(AnalysisReport {
        stage,
        posterior_summaries: draws
            .columns()
            .iter()
            .map(|(name, chain)| summarize(name, chain))
            .collect(),
        decision_probs: record.posterior_probs.clone(),
        decisions: record,
        derived_rates: derived_rates(&draws, config)?,
        not_converged: diag.flagged,
        acceptance_rates: draws.acceptance_rates.clone(),
        seed: settings.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::DoseSelection;
    use crate::model::{Counts, Stage2Counts};

    #[test]
    fn all_zero_interim_is_no_go() {
        let cfg = ModelConfig::default();
        let data = TrialData::stage1_only(vec![Counts::new(0, 20); 4]);
        let rep = analyze(&data, &cfg, &McmcSettings::default(), Stage::Interim).unwrap();
        assert_eq!(rep.decisions.go_stage1, vec![false; 4]);
        assert!(rep.decision_probs.iter().all(|p| p.go < 0.05));
        for s in rep.posterior_summaries.iter().chain(&rep.derived_rates) {
            assert!(s.lower_95 <= s.upper_95);
        }
    }

    #[test]
    fn final_without_go_is_an_error() {
        let cfg = ModelConfig::default();
        let data = TrialData::stage1_only(vec![Counts::new(3, 20); 4]);
        let err = analyze(&data, &cfg, &McmcSettings::default(), Stage::Final).unwrap_err();
        assert!(err.to_string().contains("nothing to analyze"));
    }

    #[test]
    fn strong_final_data_selects_a_dose() {
        let cfg = ModelConfig {
            n_indications: 1,
            reference_rates: vec![0.2],
            target_rates: vec![0.4],
            sample_plan: crate::model::SamplePlan::uniform(1, 20, 20, 20),
            ..ModelConfig::default()
        };
        let data = TrialData::with_stage2(
            vec![Counts::new(12, 20)],
            vec![Some(Stage2Counts {
                high: Counts::new(16, 20),
                low: Counts::new(15, 20),
            })],
        );
        let rep = analyze(&data, &cfg, &McmcSettings::default(), Stage::Final).unwrap();
        assert_eq!(rep.decisions.poc_high, vec![Some(true)]);
        assert_eq!(rep.decisions.poc_low, vec![Some(true)]);
        assert!(rep.decisions.final_selection[0].is_some_and(|s| s != DoseSelection::None));
    }

    #[test]
    fn malformed_counts_rejected() {
        let cfg = ModelConfig::default();
        let data = TrialData::stage1_only(vec![Counts::new(30, 20); 4]);
        assert!(matches!(
            analyze(&data, &cfg, &McmcSettings::default(), Stage::Interim),
            Err(MatsError::InvalidData(_))
        ));
    }

    #[test]
    fn stage_parses() {
        assert_eq!("interim".parse::<Stage>().unwrap(), Stage::Interim);
        assert_eq!("Final".parse::<Stage>().unwrap(), Stage::Final);
        assert!("midway".parse::<Stage>().is_err());
    }
}
