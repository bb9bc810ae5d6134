//! Single-chain convergence diagnostics and posterior summaries.

use serde::{Deserialize, Serialize};

/// R-hat above this marks a parameter as not converged.
pub const RHAT_FLAG: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub split_rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub parameters: Vec<ParameterDiagnostics>,
    /// Names of parameters with R-hat above [`RHAT_FLAG`] or a degenerate chain.
    pub flagged: Vec<String>,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Gelman-Rubin statistic on the two halves of one chain (middle draw dropped
/// when the length is odd). NaN for chains shorter than 4 or with zero variance.
pub fn split_rhat(chain: &[f64]) -> f64 {
    let half = chain.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let first = &chain[..half];
    let second = &chain[chain.len() - half..];
    let (m1, v1) = mean_var(first);
    let (m2, v2) = mean_var(second);
    let n = half as f64;
    let w = 0.5 * (v1 + v2);
    let grand = 0.5 * (m1 + m2);
    let b = n * ((m1 - grand).powi(2) + (m2 - grand).powi(2));
    if w == 0.0 {
        return if b == 0.0 { f64::NAN } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Effective sample size from autocorrelations truncated by Geyer's initial
/// monotone positive sequence.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return f64::NAN;
    }
    let m = chain.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = chain.iter().map(|v| v - m).collect();
    let acov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = acov(0);
    if c0 == 0.0 {
        return f64::NAN;
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (acov(2 * k) + acov(2 * k + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = tau.max(1.0 / (n as f64).log10());
    n as f64 / tau
}

pub fn diagnose(name: &str, chain: &[f64]) -> ParameterDiagnostics {
    ParameterDiagnostics {
        name: name.to_string(),
        split_rhat: split_rhat(chain),
        ess: effective_sample_size(chain),
    }
}

/// Mean, SD, equal-tailed 95% interval and diagnostics of one scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower_95: f64,
    pub upper_95: f64,
    pub rhat: f64,
    pub ess: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn summarize(name: &str, chain: &[f64]) -> Summary {
    let n = chain.len() as f64;
    let mean = chain.iter().sum::<f64>() / n;
    let sd = if chain.len() > 1 {
        (chain.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = chain.to_vec();
    sorted.sort_by(f64::total_cmp);
    let d = diagnose(name, chain);
    Summary {
        name: name.to_string(),
        mean,
        sd,
        lower_95: quantile_sorted(&sorted, 0.025),
        upper_95: quantile_sorted(&sorted, 0.975),
        rhat: d.split_rhat,
        ess: d.ess,
    }
}
