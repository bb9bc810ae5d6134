//! On-disk formats for simulation runs.
//!
//! A run directory holds `run.json` (the manifest), `replicates.jsonl`
//! (one [`ReplicateRecord`] per line), and the summaries `oc.json` / `oc.csv`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MatsError, Result};
use crate::inference::McmcSettings;
use crate::model::ModelConfig;
use crate::simulator::{aggregate, OperatingCharacteristics, ReplicateRecord, Scenario, ScenarioSpec};

pub const MANIFEST_FILE: &str = "run.json";
pub const REPLICATES_FILE: &str = "replicates.jsonl";
pub const OC_JSON_FILE: &str = "oc.json";
pub const OC_CSV_FILE: &str = "oc.csv";

/// Inputs of a simulation run, sufficient to re-aggregate its records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: Scenario,
    pub config: ModelConfig,
    pub settings: McmcSettings,
    pub n_replicates: usize,
    pub seed: u64,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Loads a scenario file and labels it against `config`.
pub fn read_scenario(path: &Path, config: &ModelConfig) -> Result<Scenario> {
    let spec: ScenarioSpec = read_json(path)?;
    spec.resolve(config)
}

pub fn write_replicates<W: Write>(mut w: W, records: &[ReplicateRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replicates<R: BufRead>(r: R) -> Result<Vec<ReplicateRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// `scenario,metric,value` rows with a header.
pub fn write_oc_csv<W: Write>(mut w: W, ocs: &[OperatingCharacteristics]) -> Result<()> {
    writeln!(w, "scenario,metric,value")?;
    for oc in ocs {
        for (metric, value) in oc.flat_metrics() {
            writeln!(w, "{},{},{}", oc.scenario, metric, value)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Persists records first, then the summaries derived from them.
pub fn write_run(
    dir: &Path,
    manifest: &RunManifest,
    records: &[ReplicateRecord],
    oc: &OperatingCharacteristics,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(MANIFEST_FILE), manifest)?;
    write_replicates(BufWriter::new(File::create(dir.join(REPLICATES_FILE))?), records)?;
    write_json(&dir.join(OC_JSON_FILE), oc)?;
    write_oc_csv(
        BufWriter::new(File::create(dir.join(OC_CSV_FILE))?),
        std::slice::from_ref(oc),
    )?;
    Ok(())
}

/// Re-aggregates a run directory from its manifest and replicate records.
pub fn reaggregate(dir: &Path) -> Result<OperatingCharacteristics> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let records = read_replicates(BufReader::new(File::open(dir.join(REPLICATES_FILE))?))?;
    if records.len() != manifest.n_replicates {
        return Err(MatsError::Stage(format!(
            "{} holds {} records but the manifest lists {}",
            REPLICATES_FILE,
            records.len(),
            manifest.n_replicates
        )));
    }
    aggregate(
        &manifest.scenario,
        &manifest.config,
        &manifest.settings,
        &records,
        manifest.seed,
    )
}
