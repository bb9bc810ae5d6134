//! Request and response bodies of the v1 API.

use std::path::PathBuf;

use mats_core::calibration::{self, CurvePoint};
use mats_core::{
    builtin_scenario, CalibrationRequest, FieldError, MatsError, McmcSettings, ModelConfig, OperatingCharacteristics,
    Result, Scenario, ScenarioSpec, Stage, TrialData,
};
use serde::{Deserialize, Serialize};

fn default_replicates() -> usize {
    1000
}

fn default_seed() -> u64 {
    42
}

/// Where a simulation job gets its true rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    /// Name of a built-in scenario, e.g. `"GN"`.
    Builtin(String),
    /// Path of a scenario JSON file, read when the job starts.
    File {
        file: PathBuf,
    },
    Inline(ScenarioSpec),
}

impl ScenarioRef {
    /// Resolves and labels against `config`, reading the file for [`ScenarioRef::File`].
    pub fn resolve(&self, config: &ModelConfig) -> Result<Scenario> {
        match self {
            ScenarioRef::Builtin(name) => ScenarioSpec {
                truth: None,
                ..builtin_scenario(name)?.to_spec()
            }
            .resolve(config),
            ScenarioRef::File { file } => mats_core::io::read_scenario(file, config),
            ScenarioRef::Inline(spec) => spec.clone().resolve(config),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRequest {
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub config: ModelConfig,
    #[serde(default)]
    pub settings: McmcSettings,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl SimulationRequest {
    /// Checks everything that can be checked without touching the disk.
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(MatsError::NoReplicates);
        }
        self.config.validate()?;
        self.settings.validate()?;
        match &self.scenario {
            ScenarioRef::File { .. } => Ok(()),
            other => other.resolve(&self.config).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationJob {
    pub id: String,
    pub status: JobStatus,
    /// Completed fraction of replicates in `[0, 1]`.
    pub progress: f64,
    pub completed: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<OperatingCharacteristics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub request: SimulationRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCreated {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub data: TrialData,
    #[serde(default)]
    pub config: ModelConfig,
    #[serde(default)]
    pub settings: McmcSettings,
    pub stage: Stage,
    /// Overrides `settings.seed` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AnalyzeRequest {
    pub fn effective_settings(&self) -> McmcSettings {
        match self.seed {
            Some(s) => self.settings.clone().with_seed(s),
            None => self.settings.clone(),
        }
    }
}

fn default_grid_min() -> f64 {
    0.1
}

fn default_grid_max() -> f64 {
    1.5
}

fn default_grid_step() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub delta: f64,
    pub p2: Vec<f64>,
    #[serde(default = "default_grid_min")]
    pub grid_min: f64,
    #[serde(default = "default_grid_max")]
    pub grid_max: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

impl CalibrateRequest {
    pub fn to_core(&self) -> Result<CalibrationRequest> {
        Ok(CalibrationRequest {
            delta_target: self.delta,
            p2_candidates: self.p2.clone(),
            tau2_grid: calibration::grid(self.grid_min, self.grid_max, self.grid_step)?,
        })
    }
}

/// Query of `GET /curves`; `tau2` is a comma-separated list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurvesQuery {
    pub tau2: Option<String>,
    pub p2min: Option<f64>,
    pub p2max: Option<f64>,
    pub p2step: Option<f64>,
}

impl CurvesQuery {
    pub fn points(&self) -> Result<Vec<CurvePoint>> {
        let tau2 = match &self.tau2 {
            None => calibration::default_tau2_grid(),
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| {
                        MatsError::InvalidConfig(vec![FieldError::new("tau2", format!("not a number: `{t}`"))])
                    })
                })
                .collect::<Result<_>>()?,
        };
        let lo = self.p2min.unwrap_or(0.01);
        let hi = self.p2max.unwrap_or(0.99);
        let step = self.p2step.unwrap_or(0.01);
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(MatsError::InvalidConfig(vec![FieldError::new(
                "p2min,p2max",
                format!("need 0 < p2min ≤ p2max < 1, got {lo}, {hi}"),
            )]));
        }
        if (hi - lo) / step > 10_000.0 {
            return Err(MatsError::InvalidConfig(vec![FieldError::new(
                "p2step",
                "more than 10000 points requested",
            )]));
        }
        let p2 = calibration::grid(lo, hi, step)?;
        calibration::curve_points(&tau2, &p2)
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}
