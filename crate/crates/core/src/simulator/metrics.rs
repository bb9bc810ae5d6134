//! Operating characteristics aggregated from replicate records.
//!
//! Stage 1:
//! - family-wise Type I: some truly null indication got GO
//! - family-wise Type II: some truly active indication got No-Go
//!
//! Stage 2, for scenarios with at least one indication that has a correct dose:
//! - Perfect: every such indication selects its correct dose
//! - PoC: at least one such indication selects a truly active dose
//! - DO: at least one such indication selects its correct dose
//!
//! Stage 2 Type I, for scenarios where no indication has a correct dose:
//! any dose selected in any indication.

use serde::{Deserialize, Serialize};

use super::scenario::{DoseLabel, Scenario};
use super::{config_digest, ReplicateRecord};
use crate::decision::DoseSelection;
use crate::error::{MatsError, Result};
use crate::inference::McmcSettings;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOneErrorKind {
    /// GO on a null indication.
    TypeI,
    /// No-Go on an active indication.
    TypeII,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicationError {
    /// `None` for indications whose high dose is neither null nor active.
    pub kind: Option<StageOneErrorKind>,
    pub rate: Option<f64>,
}

/// Fraction of replicates selecting each outcome in one indication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SelectionRates {
    pub stopped: f64,
    pub none: f64,
    pub high: f64,
    pub low: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub scenario: String,
    pub stage1_type1_fw: Option<f64>,
    pub stage1_type2_fw: Option<f64>,
    pub stage2_type1_fw: Option<f64>,
    pub perfect: Option<f64>,
    pub poc: Option<f64>,
    pub do_metric: Option<f64>,
    pub by_indication_stage1_errors: Vec<IndicationError>,
    pub avg_sample_size: Vec<f64>,
    pub go_rate: Vec<f64>,
    pub selection_rates: Vec<SelectionRates>,
    pub n_replicates: usize,
    pub seed: u64,
    pub config_digest: String,
}

/// Pure fold over replicate records.
pub fn aggregate(
    scenario: &Scenario,
    config: &ModelConfig,
    settings: &McmcSettings,
    records: &[ReplicateRecord],
    master_seed: u64,
) -> Result<OperatingCharacteristics> {
    if records.is_empty() {
        return Err(MatsError::NoReplicates);
    }
    let j_count = scenario.n_indications();
    if let Some(bad) = records.iter().find(|r| r.decisions.go_stage1.len() != j_count) {
        return Err(MatsError::DimensionMismatch {
            what: format!("replicate {}", bad.index),
            expected: j_count,
            found: bad.decisions.go_stage1.len(),
        });
    }
    let n = records.len();
    let frac = |k: usize| k as f64 / n as f64;
    let truth = &scenario.truth;
    let null: Vec<usize> = (0..j_count).filter(|&j| truth[j].high == DoseLabel::Null).collect();
    let active: Vec<usize> = (0..j_count).filter(|&j| truth[j].high == DoseLabel::Active).collect();
    let promising: Vec<usize> = (0..j_count).filter(|&j| truth[j].promising()).collect();

    let mut fw1 = 0;
    let mut fw2 = 0;
    let mut s2_type1 = 0;
    let mut perfect = 0;
    let mut poc = 0;
    let mut do_hits = 0;
    let mut go_counts = vec![0usize; j_count];
    let mut enrolled = vec![0u64; j_count];
    let mut sel = vec![[0usize; 4]; j_count];

    for r in records {
        let d = &r.decisions;
        let selection = |j: usize| d.final_selection[j].unwrap_or(DoseSelection::None);
        if null.iter().any(|&j| d.go_stage1[j]) {
            fw1 += 1;
        }
        if active.iter().any(|&j| !d.go_stage1[j]) {
            fw2 += 1;
        }
        if promising.is_empty() {
            if (0..j_count).any(|j| selection(j) != DoseSelection::None) {
                s2_type1 += 1;
            }
        } else {
            if promising.iter().all(|&j| selection(j) == truth[j].correct) {
                perfect += 1;
            }
            if promising.iter().any(|&j| truth[j].accepts_for_poc(selection(j))) {
                poc += 1;
            }
            if promising.iter().any(|&j| selection(j) == truth[j].correct) {
                do_hits += 1;
            }
        }
        for j in 0..j_count {
            let go = d.go_stage1[j];
            go_counts[j] += go as usize;
            enrolled[j] += config.sample_plan.enrolled(j, go) as u64;
            let slot = match d.final_selection[j] {
                _ if !go => 0,
                Some(DoseSelection::High) => 2,
                Some(DoseSelection::Low) => 3,
                _ => 1,
            };
            sel[j][slot] += 1;
        }
    }

    let by_indication = (0..j_count)
        .map(|j| match truth[j].high {
            DoseLabel::Null => IndicationError {
                kind: Some(StageOneErrorKind::TypeI),
                rate: Some(frac(go_counts[j])),
            },
            DoseLabel::Active => IndicationError {
                kind: Some(StageOneErrorKind::TypeII),
                rate: Some(frac(n - go_counts[j])),
            },
            DoseLabel::Intermediate => IndicationError { kind: None, rate: None },
        })
        .collect();

    let has_promising = !promising.is_empty();
    Ok(OperatingCharacteristics {
        scenario: scenario.name.clone(),
        stage1_type1_fw: (!null.is_empty()).then(|| frac(fw1)),
        stage1_type2_fw: (!active.is_empty()).then(|| frac(fw2)),
        stage2_type1_fw: (!has_promising).then(|| frac(s2_type1)),
        perfect: has_promising.then(|| frac(perfect)),
        poc: has_promising.then(|| frac(poc)),
        do_metric: has_promising.then(|| frac(do_hits)),
        by_indication_stage1_errors: by_indication,
        avg_sample_size: enrolled.iter().map(|&e| e as f64 / n as f64).collect(),
        go_rate: go_counts.iter().map(|&g| frac(g)).collect(),
        selection_rates: sel
            .iter()
            .map(|s| SelectionRates {
                stopped: frac(s[0]),
                none: frac(s[1]),
                high: frac(s[2]),
                low: frac(s[3]),
            })
            .collect(),
        n_replicates: n,
        seed: master_seed,
        config_digest: config_digest(config, settings),
    })
}

impl OperatingCharacteristics {
    /// Flat `(metric, value)` pairs; undefined metrics are omitted.
    /// Per-indication metric names carry a 1-based index, e.g. `go_rate[2]`.
    pub fn flat_metrics(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push((name.to_string(), v));
            }
        };
        push("stage1_type1_fw", self.stage1_type1_fw);
        push("stage1_type2_fw", self.stage1_type2_fw);
        push("stage2_type1_fw", self.stage2_type1_fw);
        push("perfect", self.perfect);
        push("poc", self.poc);
        push("do", self.do_metric);
        for (j, e) in self.by_indication_stage1_errors.iter().enumerate() {
            let name = match e.kind {
                Some(StageOneErrorKind::TypeI) => format!("stage1_type1[{}]", j + 1),
                Some(StageOneErrorKind::TypeII) => format!("stage1_type2[{}]", j + 1),
                None => continue,
            };
            push(&name, e.rate);
        }
        for (j, v) in self.avg_sample_size.iter().enumerate() {
            push(&format!("avg_sample_size[{}]", j + 1), Some(*v));
        }
        for (j, v) in self.go_rate.iter().enumerate() {
            push(&format!("go_rate[{}]", j + 1), Some(*v));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::scenario::builtin_scenario;
    use super::*;
    use crate::decision::DecisionRecord;
    use crate::model::{Counts, TrialData};

    fn record(index: u64, go: [bool; 4], sel: [Option<DoseSelection>; 4]) -> ReplicateRecord {
        let mut d = DecisionRecord::interim(go.to_vec(), &[0.0; 4]);
        d.final_selection = sel.to_vec();
        ReplicateRecord {
            index,
            data: TrialData::stage1_only(vec![Counts::new(0, 20); 4]),
            decisions: d,
            interim_seed: 0,
            final_seed: None,
        }
    }

    #[test]
    fn pick_h_partial_metrics_by_hand() {
        use DoseSelection::{High, Low, None as Nil};
        let s = builtin_scenario("Pick-H-Partial").unwrap();
        let cfg = ModelConfig::default();
        let recs = vec![
            // perfect
            record(0, [true, true, false, false], [Some(High), Some(High), None, None]),
            // ind 3 false GO, ind 2 stopped: PoC and DO via ind 1 only
            record(1, [true, false, true, false], [Some(High), None, Some(Nil), None]),
            // wrong dose in ind 1, nothing in ind 2
            record(2, [true, true, false, false], [Some(Low), Some(Nil), None, None]),
            // everything stopped
            record(3, [false; 4], [None; 4]),
        ];
        let oc = aggregate(&s, &cfg, &McmcSettings::default(), &recs, 1).unwrap();
        assert_eq!(oc.stage1_type1_fw, Some(0.25));
        assert_eq!(oc.stage1_type2_fw, Some(0.5));
        assert_eq!(oc.stage2_type1_fw, None);
        assert_eq!(oc.perfect, Some(0.25));
        assert_eq!(oc.poc, Some(0.5));
        assert_eq!(oc.do_metric, Some(0.5));
        assert_eq!(oc.go_rate, vec![0.75, 0.5, 0.25, 0.0]);
        assert_eq!(oc.avg_sample_size, vec![50.0, 40.0, 30.0, 20.0]);
        assert_eq!(oc.by_indication_stage1_errors[0].kind, Some(StageOneErrorKind::TypeII));
        assert_eq!(oc.by_indication_stage1_errors[0].rate, Some(0.25));
        assert_eq!(oc.by_indication_stage1_errors[2].kind, Some(StageOneErrorKind::TypeI));
        assert_eq!(oc.by_indication_stage1_errors[2].rate, Some(0.25));
    }

    #[test]
    fn global_null_stage2_type1() {
        use DoseSelection::{Low, None as Nil};
        let s = builtin_scenario("GN").unwrap();
        let recs = vec![
            record(0, [true, false, false, false], [Some(Nil), None, None, None]),
            record(1, [false, true, false, false], [None, Some(Low), None, None]),
        ];
        let oc = aggregate(&s, &ModelConfig::default(), &McmcSettings::default(), &recs, 0).unwrap();
        assert_eq!(oc.stage1_type1_fw, Some(1.0));
        assert_eq!(oc.stage1_type2_fw, None);
        assert_eq!(oc.stage2_type1_fw, Some(0.5));
        assert_eq!(oc.perfect, None);
    }

    #[test]
    fn ga_ns_poc_accepts_either_dose() {
        use DoseSelection::{High, Low, None as Nil};
        let s = builtin_scenario("GA-NS").unwrap();
        let recs = vec![
            record(0, [true; 4], [Some(High), Some(Nil), Some(Nil), Some(Nil)]),
            record(1, [true; 4], [Some(Low); 4]),
        ];
        let oc = aggregate(&s, &ModelConfig::default(), &McmcSettings::default(), &recs, 0).unwrap();
        assert_eq!(oc.poc, Some(1.0));
        assert_eq!(oc.do_metric, Some(0.5));
        assert_eq!(oc.perfect, Some(0.5));
    }

    #[test]
    fn empty_records_error() {
        let s = builtin_scenario("GN").unwrap();
        assert!(aggregate(&s, &ModelConfig::default(), &McmcSettings::default(), &[], 0).is_err());
    }
}
