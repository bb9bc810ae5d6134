//! True-rate scenarios and the truth labels that drive error metrics.

use serde::{Deserialize, Serialize};

use crate::decision::DoseSelection;
use crate::error::{FieldError, MatsError, Result};
use crate::model::ModelConfig;

/// Whether a dose truly works in an indication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoseLabel {
    /// Rate at or below the reference rate.
    Null,
    /// Strictly between reference and target rates.
    Intermediate,
    /// Rate at or above the target rate.
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicationTruth {
    pub high: DoseLabel,
    pub low: DoseLabel,
    /// The correct final selection; `None` when no dose should be picked.
    pub correct: DoseSelection,
}

impl IndicationTruth {
    /// Labels each dose by comparing its rate with `p0` and `p1_star`. The low
    /// dose is the correct pick when both are active with equal rates;
    /// otherwise an active high dose is correct.
    pub fn from_rates(high: f64, low: f64, p0: f64, p1_star: f64) -> Self {
        const EPS: f64 = 1e-9;
        let label = |p: f64| {
            if p <= p0 + EPS {
                DoseLabel::Null
            } else if p >= p1_star - EPS {
                DoseLabel::Active
            } else {
                DoseLabel::Intermediate
            }
        };
        let (h, l) = (label(high), label(low));
        let correct = match (h, l) {
            (DoseLabel::Active, DoseLabel::Active) if (high - low).abs() < EPS => DoseSelection::Low,
            (DoseLabel::Active, _) => DoseSelection::High,
            _ => DoseSelection::None,
        };
        Self {
            high: h,
            low: l,
            correct,
        }
    }

    /// Selections that count as proof of concept: any truly active dose.
    pub fn accepts_for_poc(&self, sel: DoseSelection) -> bool {
        match sel {
            DoseSelection::High => self.high == DoseLabel::Active,
            DoseSelection::Low => self.low == DoseLabel::Active,
            DoseSelection::None => false,
        }
    }

    pub fn promising(&self) -> bool {
        self.correct != DoseSelection::None
    }
}

/// Scenario as stored on disk: rates plus optional truth overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// `true_rates[0]` is the high dose, `true_rates[1]` the low dose.
    pub true_rates: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<IndicationTruth>>,
}

impl ScenarioSpec {
    /// Validates the rates and fills missing truth labels from `config`.
    pub fn resolve(self, config: &ModelConfig) -> Result<Scenario> {
        let j = config.n_indications;
        let mut errs = Vec::new();
        if self.true_rates.len() != 2 {
            errs.push(FieldError::new(
                "true_rates",
                format!("expected 2 rows (high, low), found {}", self.true_rates.len()),
            ));
        }
        for (r, row) in self.true_rates.iter().enumerate() {
            if row.len() != j {
                errs.push(FieldError::new(
                    format!("true_rates[{r}]"),
                    format!("expected {j} entries, found {}", row.len()),
                ));
            }
            for (c, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    errs.push(FieldError::new(
                        format!("true_rates[{r}][{c}]"),
                        format!("must lie in [0,1], got {p}"),
                    ));
                }
            }
        }
        if errs.is_empty() {
            for c in 0..j {
                if self.true_rates[0][c] < self.true_rates[1][c] {
                    errs.push(FieldError::new(
                        format!("true_rates[1][{c}]"),
                        "low-dose rate exceeds high-dose rate",
                    ));
                }
            }
        }
        if let Some(t) = &self.truth {
            if t.len() != j {
                errs.push(FieldError::new(
                    "truth",
                    format!("expected {j} entries, found {}", t.len()),
                ));
            }
        }
        if !errs.is_empty() {
            return Err(MatsError::InvalidConfig(errs));
        }
        let truth = match self.truth {
            Some(t) => t,
            None => (0..j)
                .map(|c| {
                    IndicationTruth::from_rates(
                        self.true_rates[0][c],
                        self.true_rates[1][c],
                        config.reference_rates[c],
                        config.target_rates[c],
                    )
                })
                .collect(),
        };
        Ok(Scenario {
            name: self.name,
            true_rates: self.true_rates,
            truth,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub true_rates: Vec<Vec<f64>>,
    pub truth: Vec<IndicationTruth>,
}

impl Scenario {
    pub fn n_indications(&self) -> usize {
        self.truth.len()
    }

    pub fn high_rate(&self, j: usize) -> f64 {
        self.true_rates[0][j]
    }

    pub fn low_rate(&self, j: usize) -> f64 {
        self.true_rates[1][j]
    }

    pub fn to_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            name: self.name.clone(),
            true_rates: self.true_rates.clone(),
            truth: Some(self.truth.clone()),
        }
    }
}

const CATALOG: [(&str, [f64; 4], [f64; 4]); 8] = [
    ("GN", [0.1, 0.2, 0.1, 0.2], [0.1, 0.2, 0.1, 0.2]),
    ("GA-NS", [0.4, 0.5, 0.4, 0.5], [0.4, 0.5, 0.4, 0.5]),
    ("GA-S", [0.5, 0.6, 0.5, 0.6], [0.4, 0.5, 0.4, 0.5]),
    ("Pick-H-All", [0.4, 0.5, 0.4, 0.5], [0.1, 0.2, 0.1, 0.2]),
    ("Pick-H-Partial", [0.4, 0.5, 0.1, 0.2], [0.1, 0.2, 0.1, 0.2]),
    ("Pick-L-Partial", [0.4, 0.2, 0.1, 0.5], [0.4, 0.2, 0.1, 0.5]),
    ("Mixed", [0.4, 0.2, 0.1, 0.5], [0.4, 0.2, 0.1, 0.2]),
    ("Intermediate", [0.4, 0.2, 0.1, 0.5], [0.3, 0.2, 0.1, 0.4]),
];

/// The eight reference scenarios over four indications, labeled against the
/// default reference and target rates.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let cfg = ModelConfig::default();
    CATALOG
        .iter()
        .map(|(name, high, low)| {
            ScenarioSpec {
                name: name.to_string(),
                true_rates: vec![high.to_vec(), low.to_vec()],
                truth: None,
            }
            .resolve(&cfg)
            .expect("builtin scenarios are valid")
        })
        .collect()
}

/// Looks up a builtin scenario by name, ignoring ASCII case.
pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| MatsError::UnknownScenario(name.to_string()))
}
