//! Choosing the logit-scale dose-gap threshold `tau2` from a response-rate gap.
//!
//! For a low-dose rate `p2`, a logit gap `tau2` corresponds to the
//! probability-scale gap `inv_logit(tau2 + logit(p2)) - p2`. The calibrated
//! `tau2` is the largest grid value whose gap stays at or below the target
//! for every plausible `p2`.

use serde::{Deserialize, Serialize};

use crate::error::{MatsError, Result};
use crate::model::{inv_logit, logit};

/// Probability-scale gap between the doses implied by `tau2` at low-dose rate `p2`.
pub fn delta_from_tau2(tau2: f64, p2: f64) -> Result<f64> {
    if !(tau2 > 0.0 && tau2.is_finite()) {
        return Err(MatsError::Domain(format!("tau2 must be positive, got {tau2}")));
    }
    Ok(inv_logit(tau2 + logit(p2)?) - p2)
}

/// `count` values starting at `min` spaced by `step`, rounded to 12 decimals
/// so that e.g. the fourth point of `0.1:0.1` is exactly `0.4`.
pub fn grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return Err(MatsError::Calibration(format!("invalid grid {min}:{max}:{step}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((min + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

pub fn default_tau2_grid() -> Vec<f64> {
    (1..=15).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRequest {
    /// Minimum response-rate gap worth detecting.
    pub delta_target: f64,
    pub p2_candidates: Vec<f64>,
    #[serde(default = "default_tau2_grid")]
    pub tau2_grid: Vec<f64>,
}

impl CalibrationRequest {
    pub fn new(delta_target: f64, p2_candidates: Vec<f64>) -> Self {
        Self {
            delta_target,
            p2_candidates,
            tau2_grid: default_tau2_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_target > 0.0 && self.delta_target < 1.0) {
            return Err(MatsError::Calibration(format!(
                "delta_target must lie in (0,1), got {}",
                self.delta_target
            )));
        }
        if self.p2_candidates.is_empty() {
            return Err(MatsError::Calibration("p2_candidates is empty".into()));
        }
        if let Some(p) = self.p2_candidates.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(MatsError::Calibration(format!(
                "p2 candidates must lie in (0,1), got {p}"
            )));
        }
        if self.tau2_grid.is_empty() {
            return Err(MatsError::Calibration("tau2_grid is empty".into()));
        }
        if self.tau2_grid[0] <= 0.0 || self.tau2_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MatsError::Calibration(
                "tau2_grid must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// One `(tau2, p2)` cell of the constraint table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau2: f64,
    pub p2: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub tau2: f64,
    pub deltas: Vec<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// `None` when even the smallest grid value exceeds the target gap.
    pub tau2: Option<f64>,
    pub delta_target: f64,
    pub p2_candidates: Vec<f64>,
    pub table: Vec<ConstraintRow>,
}

/// Largest grid `tau2` with `delta_from_tau2(tau2, p2) ≤ delta_target` for all candidates.
pub fn calibrate_tau2(req: &CalibrationRequest) -> Result<Option<f64>> {
    Ok(calibrate_tau2_table(req)?.tau2)
}

/// [`calibrate_tau2`] plus the full constraint table for display.
pub fn calibrate_tau2_table(req: &CalibrationRequest) -> Result<CalibrationResult> {
    req.validate()?;
    let mut table = Vec::with_capacity(req.tau2_grid.len());
    for &tau2 in &req.tau2_grid {
        let deltas = req
            .p2_candidates
            .iter()
            .map(|&p2| delta_from_tau2(tau2, p2))
            .collect::<Result<Vec<_>>>()?;
        let feasible = deltas.iter().all(|&d| d <= req.delta_target);
        table.push(ConstraintRow { tau2, deltas, feasible });
    }
    let tau2 = table.iter().rev().find(|r| r.feasible).map(|r| r.tau2);
    Ok(CalibrationResult {
        tau2,
        delta_target: req.delta_target,
        p2_candidates: req.p2_candidates.clone(),
        table,
    })
}

/// Dense `(tau2, p2, delta)` table for plotting gap curves.
pub fn curve_points(tau2_values: &[f64], p2_range: &[f64]) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(tau2_values.len() * p2_range.len());
    for &tau2 in tau2_values {
        for &p2 in p2_range {
            out.push(CurvePoint {
                tau2,
                p2,
                delta: delta_from_tau2(tau2, p2)?,
            });
        }
    }
    Ok(out)
}
