//! Bayesian multi-arm two-stage design for proof of concept and dose
//! optimization across several indications.
//!
//! Stage 1 treats every indication at the high dose and stops the ones with
//! weak evidence; Stage 2 randomizes the high and low doses within the
//! remaining indications and picks a dose (or none) for each. Decisions come
//! from posterior probabilities under a hierarchical binomial-logit model
//! that borrows strength across indications, doses and stages.
//!
//! - [`model`]: configuration, data, parameter state and the joint density
//! - [`inference`]: Metropolis-within-Gibbs sampler and diagnostics
//! - [`decision`]: GO, PoC, dose-optimization rules and final selection
//! - [`calibration`]: choosing the dose-gap threshold `tau2`
//! - [`simulator`]: trial simulation and operating characteristics
//! - [`analysis`]: interim and final analyses of observed data

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod decision;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod simulator;

pub use analysis::{analyze, AnalysisReport, Stage};
pub use calibration::{calibrate_tau2, delta_from_tau2, CalibrationRequest, CalibrationResult};
pub use decision::{final_dose_selection, DecisionRecord, DoseSelection};
pub use error::{FieldError, MatsError, Result};
pub use inference::{sample_posterior, McmcSettings, PosteriorDraws};
pub use model::{compute_tau1, inv_logit, logit, Counts, ModelConfig, ModelState, Stage2Counts, TrialData};
pub use simulator::{
    builtin_scenario, builtin_scenarios, run_operating_characteristics, run_replicates, simulate_trial,
    OperatingCharacteristics, ReplicateSeed, Scenario, ScenarioSpec,
};
