//! Seeded wind-power scenario sets.
//!
//! Each sample is `max(0, w̄ + n)` with `n ~ N(0, σ²)` drawn independently per
//! (scenario, slot, farm). Scenario `s` draws from its own ChaCha stream, so
//! the set is bit-identical regardless of how many threads generate it.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::NetworkCase;
use crate::SlotMatrix;

/// Fraction of the forecast used as the default noise scale.
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.2;
/// Lower bound on the default noise scale, MW.
pub const DEFAULT_SIGMA_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    /// Forecast mean w̄, `[slot][farm]`, MW.
    pub forecast: SlotMatrix,
    /// Noise standard deviation, `[slot][farm]`, MW.
    pub sigma: SlotMatrix,
    pub seed: u64,
    /// `[scenario][slot][farm]`, MW.
    pub samples: Vec<SlotMatrix>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("sigma must be non-negative, got {value} at slot {slot}, farm {farm}")]
    NegativeSigma { slot: usize, farm: usize, value: f64 },
    #[error("negative sample {value} at scenario {scenario}, slot {slot}, farm {farm}")]
    NegativeSample {
        scenario: usize,
        slot: usize,
        farm: usize,
        value: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl ScenarioSet {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn horizon(&self) -> usize {
        self.forecast.len()
    }

    pub fn n_farms(&self) -> usize {
        self.forecast.first().map_or(0, Vec::len)
    }

    /// Checks shape consistency and non-negativity.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (t, m) = (self.horizon(), self.n_farms());
        let shape_ok = |mat: &SlotMatrix| mat.len() == t && mat.iter().all(|r| r.len() == m);
        if !shape_ok(&self.forecast) {
            return Err(ScenarioError::Dimension("forecast rows differ in length".into()));
        }
        if !shape_ok(&self.sigma) {
            return Err(ScenarioError::Dimension(format!("sigma must be {t}×{m}")));
        }
        for (s, sample) in self.samples.iter().enumerate() {
            if !shape_ok(sample) {
                return Err(ScenarioError::Dimension(format!("scenario {s} must be {t}×{m}")));
            }
            for (slot, row) in sample.iter().enumerate() {
                for (farm, &value) in row.iter().enumerate() {
                    if !(value >= 0.0) {
                        return Err(ScenarioError::NegativeSample {
                            scenario: s,
                            slot,
                            farm,
                            value,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Solve-time check against the case's horizon and wind-farm count.
    pub fn check_against(&self, case: &NetworkCase) -> Result<(), ScenarioError> {
        if self.horizon() != case.horizon || self.n_farms() != case.wind_farms.len() {
            return Err(ScenarioError::Dimension(format!(
                "scenarios are {}×{} (T×N_w) but the case has T={} and N_w={}",
                self.horizon(),
                self.n_farms(),
                case.horizon,
                case.wind_farms.len()
            )));
        }
        Ok(())
    }
}

/// `max(fraction·w̄, floor)` per slot and farm.
pub fn default_sigma(forecast: &SlotMatrix, fraction: f64, floor: f64) -> SlotMatrix {
    forecast
        .iter()
        .map(|r| r.iter().map(|&w| (fraction * w).max(floor)).collect())
        .collect()
}

pub fn generate_scenarios(
    forecast: &SlotMatrix,
    sigma: &SlotMatrix,
    n_samples: usize,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    if n_samples == 0 {
        return Err(ScenarioError::NoSamples);
    }
    let t = forecast.len();
    let m = forecast.first().map_or(0, Vec::len);
    if sigma.len() != t || sigma.iter().any(|r| r.len() != m) || forecast.iter().any(|r| r.len() != m) {
        return Err(ScenarioError::Dimension(format!("forecast and sigma must both be {t}×{m}")));
    }
    for (slot, row) in sigma.iter().enumerate() {
        for (farm, &value) in row.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(ScenarioError::NegativeSigma { slot, farm, value });
            }
        }
    }
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            forecast
                .iter()
                .zip(sigma)
                .map(|(fr, sr)| {
                    fr.iter()
                        .zip(sr)
                        .map(|(&w, &sd)| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            (w + sd * z).max(0.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(ScenarioSet {
        forecast: forecast.clone(),
        sigma: sigma.clone(),
        seed,
        samples,
    })
}

/// On-disk layout: header counts followed by forecast, sigma, and samples.
#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    n_samples: usize,
    horizon: usize,
    n_farms: usize,
    seed: u64,
    forecast: SlotMatrix,
    sigma: SlotMatrix,
    samples: Vec<SlotMatrix>,
}

pub fn save_scenarios(set: &ScenarioSet, path: &Path) -> Result<(), ScenarioError> {
    let file = ScenarioFile {
        n_samples: set.n_samples(),
        horizon: set.horizon(),
        n_farms: set.n_farms(),
        seed: set.seed,
        forecast: set.forecast.clone(),
        sigma: set.sigma.clone(),
        samples: set.samples.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scenarios(path: &Path) -> Result<ScenarioSet, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    scenarios_from_json(&text).map_err(|e| match e {
        ScenarioError::Parse { message, .. } => ScenarioError::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn scenarios_from_json(text: &str) -> Result<ScenarioSet, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
        path: "<scenarios>".into(),
        message: format!("at {}: {}", e.path(), e.inner()),
    })?;
    if file.samples.len() != file.n_samples {
        return Err(ScenarioError::Dimension(format!(
            "header says {} samples, file has {}",
            file.n_samples,
            file.samples.len()
        )));
    }
    if file.forecast.len() != file.horizon || file.forecast.iter().any(|r| r.len() != file.n_farms) {
        return Err(ScenarioError::Dimension(format!(
            "forecast must be {}×{}",
            file.horizon, file.n_farms
        )));
    }
    let set = ScenarioSet {
        forecast: file.forecast,
        sigma: file.sigma,
        seed: file.seed,
        samples: file.samples,
    };
    set.validate()?;
    Ok(set)
}
