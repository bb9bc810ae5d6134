//! Monte Carlo simulation of complete two-stage trials.
//!
//! Replicate `i` of a run seeded with `master` draws all of its randomness
//! from ChaCha stream `i` of `master`, so results do not depend on how
//! replicates are scheduled across threads.

pub mod metrics;
pub mod scenario;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{final_decision, interim_decision};
use crate::decision::DecisionRecord;
use crate::error::{MatsError, Result};
use crate::inference::McmcSettings;
use crate::model::{Counts, ModelConfig, Stage2Counts, TrialData};

pub use metrics::{aggregate, IndicationError, OperatingCharacteristics, StageOneErrorKind};
pub use scenario::{builtin_scenario, builtin_scenarios, DoseLabel, IndicationTruth, Scenario, ScenarioSpec};

/// Identifies the random stream of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeed {
    pub master: u64,
    pub index: u64,
}

impl ReplicateSeed {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

/// Everything one simulated trial produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: u64,
    pub data: TrialData,
    pub decisions: DecisionRecord,
    /// Sampler seed of the interim fit.
    pub interim_seed: u64,
    /// Sampler seed of the final fit; absent when every indication stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_seed: Option<u64>,
}

fn draw_binomial<R: RngCore>(rng: &mut R, n: u32, p: f64) -> u32 {
    let b = Binomial::new(n as u64, p.clamp(0.0, 1.0)).expect("binomial parameters validated");
    b.sample(rng) as u32
}

fn check_dims(scenario: &Scenario, config: &ModelConfig) -> Result<()> {
    if scenario.n_indications() != config.n_indications
        || scenario.true_rates.iter().any(|r| r.len() != config.n_indications)
    {
        return Err(MatsError::DimensionMismatch {
            what: format!("scenario `{}`", scenario.name),
            expected: config.n_indications,
            found: scenario.n_indications(),
        });
    }
    Ok(())
}

/// Runs one trial: Stage-1 enrollment on the high dose, interim fit and GO
/// rule, randomized Stage 2 for GO indications, final fit and dose selection.
pub fn simulate_trial(
    scenario: &Scenario,
    config: &ModelConfig,
    settings: &McmcSettings,
    seed: ReplicateSeed,
) -> Result<ReplicateRecord> {
    check_dims(scenario, config)?;
    let mut rng = seed.rng();
    let plan = &config.sample_plan;
    let j_count = config.n_indications;

    let stage1: Vec<Counts> = (0..j_count)
        .map(|j| {
            let n = plan.stage1[j];
            Counts::new(draw_binomial(&mut rng, n, scenario.high_rate(j)), n)
        })
        .collect();
    let interim_seed = rng.next_u64();
    let data1 = TrialData::stage1_only(stage1.clone());
    let (record, _) = interim_decision(&data1, config, &settings.clone().with_seed(interim_seed))?;

    if !record.go_stage1.iter().any(|&g| g) {
        return Ok(ReplicateRecord {
            index: seed.index,
            data: data1,
            decisions: record,
            interim_seed,
            final_seed: None,
        });
    }

    let stage2: Vec<Option<Stage2Counts>> = (0..j_count)
        .map(|j| {
            record.go_stage1[j].then(|| {
                let (nh, nl) = (plan.stage2_high[j], plan.stage2_low[j]);
                Stage2Counts {
                    high: Counts::new(draw_binomial(&mut rng, nh, scenario.high_rate(j)), nh),
                    low: Counts::new(draw_binomial(&mut rng, nl, scenario.low_rate(j)), nl),
                }
            })
        })
        .collect();
    let data = TrialData::with_stage2(stage1, stage2);
    let final_seed = rng.next_u64();
    let (record, _) = final_decision(&data, config, &settings.clone().with_seed(final_seed), record)?;
    Ok(ReplicateRecord {
        index: seed.index,
        data,
        decisions: record,
        interim_seed,
        final_seed: Some(final_seed),
    })
}

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Incremented once per finished replicate.
    pub progress: Option<Arc<AtomicUsize>>,
}

/// Simulates `n_replicates` trials in parallel, returned in replicate order.
pub fn run_replicates(
    scenario: &Scenario,
    config: &ModelConfig,
    settings: &McmcSettings,
    n_replicates: usize,
    master_seed: u64,
    options: &RunOptions,
) -> Result<Vec<ReplicateRecord>> {
    if n_replicates == 0 {
        return Err(MatsError::NoReplicates);
    }
    config.validate()?;
    settings.validate()?;
    check_dims(scenario, config)?;
    let work = || {
        (0..n_replicates as u64)
            .into_par_iter()
            .map(|index| {
                let rec = simulate_trial(
                    scenario,
                    config,
                    settings,
                    ReplicateSeed {
                        master: master_seed,
                        index,
                    },
                );
                if let Some(p) = &options.progress {
                    p.fetch_add(1, Ordering::Relaxed);
                }
                rec
            })
            .collect::<Result<Vec<_>>>()
    };
    match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| MatsError::Io(std::io::Error::other(e)))?
            .install(work),
        None => work(),
    }
}

/// Simulates and aggregates in one call.
pub fn run_operating_characteristics(
    scenario: &Scenario,
    config: &ModelConfig,
    settings: &McmcSettings,
    n_replicates: usize,
    master_seed: u64,
) -> Result<OperatingCharacteristics> {
    let records = run_replicates(
        scenario,
        config,
        settings,
        n_replicates,
        master_seed,
        &RunOptions::default(),
    )?;
    aggregate(scenario, config, settings, &records, master_seed)
}

/// SHA-256 over the JSON form of the configuration and sampler settings
/// (excluding the seed, which is reported separately).
pub fn config_digest(config: &ModelConfig, settings: &McmcSettings) -> String {
    let mut s = settings.clone();
    s.seed = 0;
    let payload = serde_json::to_vec(&(config, &s)).expect("config serializes");
    hex::encode(Sha256::digest(&payload))
}
